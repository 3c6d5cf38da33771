//! Membership inference and gradient inversion against the trainer.

mod inversion;
mod mia;

pub use inversion::{gradient_inversion, Inversion, MATCH_TOLERANCE};
pub use mia::{mia_loss_threshold, mia_reference, MiaResult};

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{dp_noise_step, NoiseSpec};
use crate::rng;
use crate::stats;
use crate::textmetrics::{EmbeddingTable, ReconstructionScores, TokenSeq};
use crate::trainer::{self, Dataset, Example, Metrics, ModelParams, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackOptions {
    /// Members and non-members scored per attack (capped by split sizes).
    pub mia_samples: usize,
    pub reference_models: usize,
    /// Share of the reference pool each reference model trains on.
    pub reference_fraction: f64,
    pub probes: usize,
    pub inversion_iterations: usize,
    pub max_tokens: usize,
}

impl Default for AttackOptions {
    fn default() -> Self {
        Self {
            mia_samples: 200,
            reference_models: 10,
            reference_fraction: 0.5,
            probes: 32,
            inversion_iterations: 200,
            max_tokens: 64,
        }
    }
}

/// Results of every attack against one trained target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRun {
    pub seed: u64,
    pub validation: Option<Metrics>,
    pub test: Metrics,
    /// Train minus test accuracy, percentage points.
    pub gap: f64,
    pub mia: MiaResult,
    pub auc_reference: Option<f64>,
    /// Mean over probes.
    pub reconstruction: ReconstructionScores,
    pub converged_probes: usize,
}

/// Seed medians for one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub noise: NoiseSpec,
    pub seeds: Vec<u64>,
    pub auc: f64,
    pub auc_reference: Option<f64>,
    pub privacy_leakage: f64,
    pub leakage_fixed: f64,
    pub reconstruction: ReconstructionScores,
    pub runs: Vec<AttackRun>,
}

impl AttackReport {
    pub fn from_runs(noise: NoiseSpec, runs: Vec<AttackRun>) -> Result<Self> {
        let med = |f: &dyn Fn(&AttackRun) -> f64| -> Result<f64> {
            stats::median(&runs.iter().map(f).collect::<Vec<_>>())
                .ok_or_else(|| Error::EmptyInput("attack runs".into()))
        };
        let refs: Vec<f64> = runs.iter().filter_map(|r| r.auc_reference).collect();
        Ok(Self {
            auc: med(&|r| r.mia.auc)?,
            auc_reference: stats::median(&refs),
            privacy_leakage: med(&|r| r.mia.leakage)?,
            leakage_fixed: med(&|r| r.mia.leakage_fixed)?,
            reconstruction: ReconstructionScores {
                jaccard: med(&|r| r.reconstruction.jaccard)?,
                cosine: med(&|r| r.reconstruction.cosine)?,
                meteor: med(&|r| r.reconstruction.meteor)?,
                rouge_l: med(&|r| r.reconstruction.rouge_l)?,
            },
            seeds: runs.iter().map(|r| r.seed).collect(),
            noise,
            runs,
        })
    }
}

const MIA_TAG: u64 = 0x31a;
const REF_TAG: u64 = 0x3ef;
const PROBE_TAG: u64 = 0x9b0;

/// Up to `n` examples of `xs`, chosen by `seed` and kept in split order.
fn sample(xs: &[Example], n: usize, seed: u64, tag: u64) -> Vec<Example> {
    let mut idx = index::sample(&mut rng::substream(seed, &[tag]), xs.len(), n.min(xs.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| xs[i].clone()).collect()
}

/// Non-members for membership inference: the test split.
fn non_members(data: &Dataset) -> &[Example] {
    &data.test
}

/// Reference models trained with `cfg` on random subsets of the validation
/// split, which is disjoint from the target's training data.
pub fn train_reference_models(data: &Dataset, cfg: &TrainConfig, opts: &AttackOptions) -> Result<Vec<ModelParams>> {
    let pool = &data.validation;
    let size = ((pool.len() as f64) * opts.reference_fraction).round() as usize;
    if size == 0 {
        return Err(Error::EmptyInput("reference pool (validation split)".into()));
    }
    (0..opts.reference_models)
        .into_par_iter()
        .map(|k| {
            let seed = rng::substream(cfg.seed, &[REF_TAG, k as u64]).get_seed();
            let seed = u64::from_le_bytes(seed[..8].try_into().expect("seed width"));
            let mut chunk = pool.to_vec();
            chunk.shuffle(&mut rng::stream(seed));
            chunk.truncate(size);
            let sub = data.with_splits(chunk, Vec::new(), Vec::new());
            let rc = TrainConfig {
                lot_size: cfg.lot_size.min(size),
                seed,
                ..cfg.clone()
            };
            Ok(trainer::private_train(&sub, &rc)?.params)
        })
        .collect()
}

/// Probe examples: held-out sentences with at least one in-vocabulary token.
pub fn probe_set(data: &Dataset, n: usize, seed: u64) -> Vec<Example> {
    let usable: Vec<Example> = data.test.iter().filter(|e| !e.features.is_empty()).cloned().collect();
    sample(&usable, n, seed, PROBE_TAG)
}

/// The probe's in-vocabulary tokens in vocabulary order, the order the
/// reconstruction is emitted in.
pub fn canonical_tokens(data: &Dataset, e: &Example) -> Vec<String> {
    e.features
        .iter()
        .flat_map(|&(i, c)| std::iter::repeat_n(data.vocab.token(i).unwrap_or("").to_string(), c as usize))
        .collect()
}

/// Inverts the noised per-sample gradient of each probe at `params` and
/// averages the reconstruction scores.
pub fn reconstruction_attack(
    data: &Dataset,
    params: &ModelParams,
    noise: &NoiseSpec,
    probes: &[Example],
    emb: &EmbeddingTable,
    opts: &AttackOptions,
    seed: u64,
) -> Result<(ReconstructionScores, usize)> {
    if probes.is_empty() {
        return Err(Error::EmptyInput("probe set".into()));
    }
    let rows: Vec<(ReconstructionScores, bool)> = probes
        .par_iter()
        .enumerate()
        .map(|(k, e)| {
            let g = params.per_sample_gradient(e)?;
            let mut r = rng::substream(seed, &[PROBE_TAG, k as u64]);
            let shared = dp_noise_step(&[g], noise, &mut r)?.gradient;
            let inv = gradient_inversion(&shared, params.shape, noise, opts.inversion_iterations)?;
            let cand = TokenSeq::new(inv.tokens(&data.vocab, opts.max_tokens));
            let reference = TokenSeq::new(canonical_tokens(data, e));
            let scores = if cand.is_empty() {
                ReconstructionScores {
                    jaccard: 0.0,
                    cosine: 0.0,
                    meteor: 0.0,
                    rouge_l: 0.0,
                }
            } else {
                ReconstructionScores::compute(&cand, &reference, emb)?
            };
            Ok((scores, inv.converged))
        })
        .collect::<Result<_>>()?;
    let m = |f: fn(&ReconstructionScores) -> f64| stats::mean(&rows.iter().map(|r| f(&r.0)).collect::<Vec<_>>());
    Ok((
        ReconstructionScores {
            jaccard: m(|s| s.jaccard),
            cosine: m(|s| s.cosine),
            meteor: m(|s| s.meteor),
            rouge_l: m(|s| s.rouge_l),
        },
        rows.iter().filter(|r| r.1).count(),
    ))
}

/// Trains a target with `cfg` and runs every attack against it.
pub fn attack_run(data: &Dataset, cfg: &TrainConfig, emb: &EmbeddingTable, opts: &AttackOptions) -> Result<AttackRun> {
    let target = trainer::private_train(data, cfg)?;
    attack_trained(data, &target.params, cfg, emb, opts)
}

/// Runs every attack against an already trained target.
pub fn attack_trained(
    data: &Dataset,
    params: &ModelParams,
    cfg: &TrainConfig,
    emb: &EmbeddingTable,
    opts: &AttackOptions,
) -> Result<AttackRun> {
    let members = sample(&data.train, opts.mia_samples, cfg.seed, MIA_TAG);
    let outs = sample(non_members(data), opts.mia_samples, cfg.seed, MIA_TAG + 1);
    let mia = mia_loss_threshold(params, &members, &outs)?;
    let auc_reference = if opts.reference_models > 0 && !data.validation.is_empty() {
        let refs = train_reference_models(data, cfg, opts)?;
        Some(mia_reference(params, &refs, &members, &outs)?)
    } else {
        None
    };
    let probes = probe_set(data, opts.probes, cfg.seed);
    let (reconstruction, converged_probes) =
        reconstruction_attack(data, params, &cfg.noise, &probes, emb, opts, cfg.seed)?;
    let train = trainer::evaluate(params, &data.train)?;
    let test = trainer::evaluate(params, &data.test)?;
    Ok(AttackRun {
        seed: cfg.seed,
        validation: if data.validation.is_empty() {
            None
        } else {
            Some(trainer::evaluate(params, &data.validation)?)
        },
        test,
        gap: 100.0 * (train.accuracy - test.accuracy),
        mia,
        auc_reference,
        reconstruction,
        converged_probes,
    })
}

/// For every noise level and seed, trains a target from `base` with that
/// noise and seed and attacks it; reports seed medians in grid order.
pub fn sweep_attack(
    data: &Dataset,
    base: &TrainConfig,
    grid: &[NoiseSpec],
    seeds: &[u64],
    emb: &EmbeddingTable,
    opts: &AttackOptions,
) -> Result<Vec<AttackReport>> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(Error::EmptyInput("attack grid or seed list".into()));
    }
    grid.iter()
        .enumerate()
        .map(|(point, noise)| {
            let runs = seeds
                .par_iter()
                .map(|&seed| {
                    let cfg = TrainConfig {
                        noise: *noise,
                        seed,
                        ..base.clone()
                    };
                    attack_run(data, &cfg, emb, opts)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::GridPoint {
                    point: format!("#{point} {noise}"),
                    source: Box::new(e),
                })?;
            AttackReport::from_runs(*noise, runs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::SyntheticCorpus;

    fn small() -> Dataset {
        let texts = SyntheticCorpus {
            examples: 400,
            ..Default::default()
        }
        .generate(1);
        Dataset::from_single(&texts, 0.6, 0.2, 1, 300).unwrap()
    }

    fn opts() -> AttackOptions {
        AttackOptions {
            mia_samples: 60,
            reference_models: 2,
            probes: 8,
            ..Default::default()
        }
    }

    #[test]
    fn single_point_sweep_matches_direct_run() {
        let d = small();
        let emb = EmbeddingTable::one_hot(d.vocab.tokens()).unwrap();
        let cfg = TrainConfig::new(0.5, 16, 3, NoiseSpec::none(), 4);
        let direct = attack_run(&d, &cfg, &emb, &opts()).unwrap();
        let swept = sweep_attack(&d, &cfg, &[NoiseSpec::none()], &[4], &emb, &opts()).unwrap();
        assert_eq!(swept.len(), 1);
        assert_eq!(swept[0].runs[0], direct);
        assert_eq!(swept[0].auc, direct.mia.auc);
        assert_eq!(swept[0].reconstruction, direct.reconstruction);
    }

    #[test]
    fn clean_reconstruction_is_exact() {
        let d = small();
        let emb = EmbeddingTable::one_hot(d.vocab.tokens()).unwrap();
        let cfg = TrainConfig::new(0.5, 16, 2, NoiseSpec::none(), 5);
        let run = attack_run(&d, &cfg, &emb, &opts()).unwrap();
        assert!(run.reconstruction.cosine > 0.999);
        assert!((run.reconstruction.rouge_l - 1.0).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&run.mia.auc));
        assert!(run.auc_reference.is_some());
    }

    #[test]
    fn sweep_errors_carry_the_grid_point() {
        let d = small();
        let emb = EmbeddingTable::one_hot(d.vocab.tokens()).unwrap();
        let cfg = TrainConfig::new(0.5, 10_000, 1, NoiseSpec::none(), 0);
        match sweep_attack(&d, &cfg, &[NoiseSpec::vmf(3.0).unwrap()], &[0], &emb, &opts()) {
            Err(Error::GridPoint { point, .. }) => assert!(point.contains("vmf")),
            other => panic!("{other:?}"),
        }
        assert!(sweep_attack(&d, &cfg, &[], &[0], &emb, &opts()).is_err());
    }

    #[test]
    fn reference_models_are_deterministic() {
        let d = small();
        let cfg = TrainConfig::new(0.5, 16, 2, NoiseSpec::none(), 5);
        let a = train_reference_models(&d, &cfg, &opts()).unwrap();
        assert_eq!(a, train_reference_models(&d, &cfg, &opts()).unwrap());
        assert_ne!(a[0], a[1]);
    }
}
