use std::fs;
use std::path::{Path, PathBuf};

use dirdp_core::accountant::{Conversion, DatasetShape, RdpAccountant};
use dirdp_core::attacks::{self, AttackOptions};
use dirdp_core::calibrate::{self, CalibrationPlan, Column, UtilityMetric};
use dirdp_core::stats::Trend;
use dirdp_core::textmetrics::{EmbeddingTable, ReconstructionScores, TokenSeq};
use dirdp_core::trainer::{self, LabeledText, Metrics, SyntheticCorpus, Vocabulary};
use dirdp_core::{Dataset, Error, ModelParams, NoiseKind, NoiseSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::args::{
    AccountantCmd, AttackArgs, AttackCmd, CalibrateCmd, DataArgs, NoiseArgs, ScoreCmd, SynthCmd, TrainArgs, TrainCmd,
};
use crate::CliError;

const MODEL_FORMAT: &str = "dirdp-model";
const MODEL_VERSION: u32 = 1;

/// How `--data` was cut into splits; stored so `attack` can rebuild them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SplitSettings {
    train_fraction: f64,
    validation_fraction: f64,
    split_seed: u64,
    max_vocab: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    split: SplitSettings,
    train: TrainConfig,
    vocabulary: Vocabulary,
    params: ModelParams,
}

fn split_settings(d: &DataArgs, base: Option<SplitSettings>) -> SplitSettings {
    let base = base.unwrap_or(SplitSettings {
        train_fraction: 0.8,
        validation_fraction: 0.1,
        split_seed: 0,
        max_vocab: 2000,
    });
    SplitSettings {
        train_fraction: d.train_fraction.unwrap_or(base.train_fraction),
        validation_fraction: d.validation_fraction.unwrap_or(base.validation_fraction),
        split_seed: d.split_seed.unwrap_or(base.split_seed),
        max_vocab: d.max_vocab.unwrap_or(base.max_vocab),
    }
}

fn load_splits(d: &DataArgs, s: &SplitSettings) -> Result<[Vec<LabeledText>; 3], CliError> {
    let data = d
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("--data is required".into()))?;
    let all = trainer::load_tsv(data)?;
    let (train, mut validation, test) = match &d.test {
        Some(t) => (all, Vec::new(), trainer::load_tsv(t)?),
        None => trainer::split_texts(&all, s.train_fraction, s.validation_fraction, s.split_seed)?,
    };
    if let Some(v) = &d.validation {
        validation = trainer::load_tsv(v)?;
    }
    Ok([train, validation, test])
}

fn load_dataset(d: &DataArgs, s: &SplitSettings, vocab: Option<Vocabulary>) -> Result<Dataset, CliError> {
    let [train, validation, test] = load_splits(d, s)?;
    Ok(match vocab {
        Some(v) => Dataset::with_vocabulary(v, &train, &validation, &test)?,
        None => Dataset::from_splits(&train, &validation, &test, s.max_vocab)?,
    })
}

fn noise_spec(n: &NoiseArgs, fallback: Option<NoiseSpec>) -> Result<NoiseSpec, CliError> {
    let Some(kind) = &n.noise else {
        return match (fallback, n.noise_param) {
            (Some(f), Some(p)) => Ok(NoiseSpec::new(f.kind(), p)?),
            (Some(f), None) => Ok(f),
            (None, Some(_)) => Err(CliError::Usage("--noise-param needs --noise".into())),
            (None, None) => Ok(NoiseSpec::none()),
        };
    };
    let kind: NoiseKind = kind.parse()?;
    match (kind, n.noise_param) {
        (NoiseKind::None, _) => Ok(NoiseSpec::none()),
        (k, Some(p)) => Ok(NoiseSpec::new(k, p)?),
        (k, None) => Err(CliError::Usage(format!("--noise {k} needs --noise-param"))),
    }
}

fn train_config(t: &TrainArgs, noise: NoiseSpec) -> TrainConfig {
    let mut cfg = TrainConfig::new(
        t.learning_rate.unwrap_or(0.5),
        t.lot_size.unwrap_or(16),
        t.epochs.unwrap_or(5),
        noise,
        t.seed.unwrap_or(0),
    );
    cfg.hidden_dim = t.hidden_dim.unwrap_or(0);
    cfg.per_layer = t.per_layer.unwrap_or(false);
    cfg
}

fn attack_options(a: &AttackArgs) -> AttackOptions {
    let d = AttackOptions::default();
    AttackOptions {
        mia_samples: a.mia_samples.unwrap_or(d.mia_samples),
        reference_models: a.reference_models.unwrap_or(d.reference_models),
        probes: a.probes.unwrap_or(d.probes),
        inversion_iterations: a.iterations.unwrap_or(d.inversion_iterations),
        max_tokens: a.max_tokens.unwrap_or(d.max_tokens),
        ..d
    }
}

fn embeddings(path: Option<&Path>, vocab: &[String]) -> Result<EmbeddingTable, CliError> {
    Ok(match path {
        Some(p) => EmbeddingTable::load(p)?,
        None => EmbeddingTable::one_hot(vocab)?,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn metrics_cells(m: Option<&Metrics>) -> String {
    match m {
        Some(m) => format!("{:.4}\t{:.4}\t{:.4}", m.accuracy, m.mcc, m.mean_loss),
        None => "-\t-\t-".into(),
    }
}

pub fn train(c: TrainCmd) -> Result<(), CliError> {
    let split = split_settings(&c.data, None);
    let data = load_dataset(&c.data, &split, None)?;
    let cfg = train_config(&c.train, noise_spec(&c.noise, None)?);
    let out = trainer::private_train(&data, &cfg)?;

    println!("epoch\ttrain_acc\ttrain_mcc\ttrain_loss\tval_acc\tval_mcc\tval_loss");
    for h in &out.history {
        println!(
            "{}\t{}\t{}",
            h.epoch,
            metrics_cells(Some(&h.train)),
            metrics_cells(h.validation.as_ref())
        );
    }
    if !data.test.is_empty() {
        let t = trainer::evaluate(&out.params, &data.test)?;
        println!(
            "test accuracy {:.4}, mcc {:.4}, loss {:.4}",
            t.accuracy, t.mcc, t.mean_loss
        );
    }
    if cfg.noise.kind() == NoiseKind::Gaussian {
        let shape = DatasetShape::new(data.train.len() as u64, cfg.lot_size as u64, cfg.epochs as u64)?;
        let delta = shape.default_delta();
        let (eps, order) =
            RdpAccountant::default().epsilon(cfg.noise.parameter(), shape.sample_rate(), shape.steps(), delta)?;
        println!("privacy: epsilon {eps:.4} at delta {delta:.3e} (order {order})");
    }
    if out.zero_gradients > 0 {
        eprintln!(
            "warning: {} zero gradients replaced by random directions",
            out.zero_gradients
        );
    }

    let path = c.model.unwrap_or_else(|| PathBuf::from("model.json"));
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        split,
        train: cfg,
        vocabulary: data.vocab,
        params: out.params,
    };
    let json = serde_json::to_string(&file).map_err(|e| CliError::Data(e.to_string()))?;
    write_file(&path, &json)?;
    println!("model written to {}", path.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let m: ModelFile = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
        return Err(CliError::Data(format!(
            "{}: unsupported model format {} v{}",
            path.display(),
            m.format,
            m.version
        )));
    }
    if m.vocabulary.len() != m.params.shape.features || m.params.theta.len() != m.params.shape.num_params() {
        return Err(CliError::Data(format!(
            "{}: parameters do not match the vocabulary",
            path.display()
        )));
    }
    Ok(m)
}

pub fn attack(c: AttackCmd) -> Result<(), CliError> {
    let path = c.model.unwrap_or_else(|| PathBuf::from("model.json"));
    let model = load_model(&path)?;
    let split = split_settings(&c.data, Some(model.split));
    let data = load_dataset(&c.data, &split, Some(model.vocabulary))?;
    if data.num_classes != model.params.shape.classes {
        return Err(Error::ShapeMismatch(format!(
            "data has {} classes, model has {}",
            data.num_classes, model.params.shape.classes
        ))
        .into());
    }
    let mut cfg = model.train;
    cfg.noise = noise_spec(&c.noise, Some(cfg.noise))?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let opts = attack_options(&c.attack);
    if opts.probes > 0 && attacks::probe_set(&data, opts.probes, cfg.seed).is_empty() {
        return Err(Error::EmptyInput("no test sentence has an in-vocabulary token to reconstruct".into()).into());
    }
    let emb = embeddings(c.attack.embeddings.as_deref(), data.vocab.tokens())?;
    let run = attacks::attack_trained(&data, &model.params, &cfg, &emb, &opts)?;

    let cell = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    let r = &run.reconstruction;
    println!("noise,noise_param,auc,auc_reference,leakage,leakage_fixed,jaccard,cosine,meteor,rouge_l,gap");
    println!(
        "{},{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4}",
        cfg.noise.kind(),
        cfg.noise.parameter(),
        run.mia.auc,
        cell(run.auc_reference),
        run.mia.leakage,
        run.mia.leakage_fixed,
        r.jaccard,
        r.cosine,
        r.meteor,
        r.rouge_l,
        run.gap
    );
    Ok(())
}

pub fn accountant(c: AccountantCmd) -> Result<(), CliError> {
    let need = |x: Option<u64>, flag: &str| x.ok_or_else(|| CliError::Usage(format!("--{flag} is required")));
    let shape = DatasetShape::new(
        need(c.examples, "examples")?,
        need(c.batch, "batch")?,
        need(c.epochs, "epochs")?,
    )?;
    let conversion = match c.conversion.as_deref().unwrap_or("tight") {
        "tight" => Conversion::Tight,
        "classic" => Conversion::Classic,
        other => {
            return Err(CliError::Usage(format!(
                "unknown conversion `{other}` (tight or classic)"
            )))
        }
    };
    let acc = RdpAccountant {
        conversion,
        ..RdpAccountant::default()
    };
    let delta = c.delta.unwrap_or_else(|| shape.default_delta());
    let targets = c.epsilons.unwrap_or_else(|| vec![1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6]);
    eprintln!(
        "q = {:.6}, steps = {}, delta = {delta:.3e}",
        shape.sample_rate(),
        shape.steps()
    );
    println!("target_epsilon,sigma,achieved_epsilon,order");
    for eps in targets {
        let budget = shape.budget(eps, Some(delta))?;
        match acc.sigma_for_target_epsilon(&budget) {
            Ok(sigma) => {
                let (achieved, order) = acc.epsilon(sigma, budget.sample_rate, budget.steps, delta)?;
                println!("{eps},{sigma:.6},{achieved:.6},{order}");
            }
            Err(Error::Infeasible { .. }) => println!("{eps},infeasible,,"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

pub fn score(c: ScoreCmd) -> Result<(), CliError> {
    let need = |x: Option<String>, flag: &str| x.ok_or_else(|| CliError::Usage(format!("--{flag} is required")));
    let cand = TokenSeq::from_text(&need(c.candidate, "candidate")?);
    let refr = TokenSeq::from_text(&need(c.reference, "reference")?);
    let emb = match &c.embeddings {
        Some(p) => EmbeddingTable::load(p)?,
        None => {
            let mut vocab: Vec<&String> = cand.tokens().iter().chain(refr.tokens()).collect();
            vocab.sort();
            vocab.dedup();
            if vocab.is_empty() {
                return Err(Error::EmptyInput("both texts are empty".into()).into());
            }
            EmbeddingTable::one_hot(&vocab)?
        }
    };
    let s = ReconstructionScores::compute(&cand, &refr, &emb)?;
    println!("jaccard,cosine,meteor,rouge_l");
    println!("{:.6},{:.6},{:.6},{:.6}", s.jaccard, s.cosine, s.meteor, s.rouge_l);
    Ok(())
}

pub fn calibrate(c: CalibrateCmd) -> Result<(), CliError> {
    let split = split_settings(&c.data, None);
    let data = load_dataset(&c.data, &split, None)?;
    let mut plan = CalibrationPlan::new(
        train_config(&c.train, NoiseSpec::none()),
        c.seeds.unwrap_or_else(|| (0..5).collect()),
    );
    plan.gaussian_sigmas = c.sigmas.unwrap_or_default();
    plan.gaussian_epsilons = c.epsilons.unwrap_or_default();
    plan.delta = c.delta;
    plan.vmf_kappas = c.kappas.unwrap_or_default();
    plan.utility = match &c.utility {
        Some(u) => u.parse::<UtilityMetric>()?,
        None => UtilityMetric::Accuracy,
    };
    plan.attack = attack_options(&c.attack);
    plan.jobs = c.jobs;
    plan.timing = c.timing.unwrap_or(false);
    let emb = embeddings(c.attack.embeddings.as_deref(), data.vocab.tokens())?;

    let cal = calibrate::run_calibration(&data, &plan, &emb)?;
    let out = c.out.unwrap_or_else(|| PathBuf::from("calibration"));
    let files = calibrate::emit(&cal, &out, c.plot.unwrap_or(false))?;

    println!("wrote {}", files.csv.display());
    for p in files.aux.iter().chain(&files.plot) {
        println!("wrote {}", p.display());
    }
    let failed = cal.aux.iter().filter(|a| a.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} grid points failed; see the aux table");
    }
    for kind in [NoiseKind::Gaussian, NoiseKind::Vmf] {
        // Larger σ is more noise, larger κ is less.
        let (down, up) = match kind {
            NoiseKind::Vmf => (Trend::Increasing, Trend::Decreasing),
            _ => (Trend::Decreasing, Trend::Increasing),
        };
        for (name, column, dir) in [
            ("utility", Column::Utility, down),
            ("auc", Column::Auc, down),
            ("rouge_l", Column::RougeL, down),
        ] {
            if let Some(t) = cal.table.trend(kind, column, dir) {
                let word = if dir == up { "increasing" } else { "decreasing" };
                println!(
                    "{kind} {name} {word} in noise parameter: rho {:.3}, p {:.4}",
                    t.rho, t.p_value
                );
            }
        }
    }
    if let Some(d) = cal.baseline_dominance {
        println!("baseline utility at least the noised one in {:.1}% of runs", 100.0 * d);
    }
    Ok(())
}

pub fn synth(c: SynthCmd) -> Result<(), CliError> {
    let out = c.out.ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let d = SyntheticCorpus::default();
    let corpus = SyntheticCorpus {
        examples: c.examples.unwrap_or(d.examples),
        cue_words: c.cue_words.unwrap_or(d.cue_words),
        filler_words: c.filler_words.unwrap_or(d.filler_words),
        cue_rate: c.cue_rate.unwrap_or(d.cue_rate),
        label_noise: c.label_noise.unwrap_or(d.label_noise),
        ..d
    };
    if !(0.0..=1.0).contains(&corpus.cue_rate) || !(0.0..=0.5).contains(&corpus.label_noise) {
        return Err(CliError::Usage(
            "--cue-rate must lie in [0, 1] and --label-noise in [0, 0.5]".into(),
        ));
    }
    let rows = corpus.generate(c.seed.unwrap_or(0));
    trainer::write_tsv(&out, &rows)?;
    println!("wrote {} sentences to {}", rows.len(), out.display());
    Ok(())
}
