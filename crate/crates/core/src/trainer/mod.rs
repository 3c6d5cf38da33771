//! Private SGD over a bag-of-words softmax classifier.
//!
//! Each step draws a lot, computes exact per-sample gradients, passes them
//! through [`dp_noise_step`](crate::mechanisms::dp_noise_step) and takes a
//! plain descent step.

mod data;
mod model;

pub use data::{
    load_tsv, split_texts, write_tsv, Dataset, Example, LabeledText, SparseVec, Split, SyntheticCorpus, Vocabulary,
};
pub use model::{ModelParams, ModelShape};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{dp_noise_step_partitioned, NoiseSpec};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lot_size: usize,
    pub epochs: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
    /// 0 trains a linear model.
    #[serde(default)]
    pub hidden_dim: usize,
    /// Noise each layer's block separately instead of the whole vector.
    #[serde(default)]
    pub per_layer: bool,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, lot_size: usize, epochs: usize, noise: NoiseSpec, seed: u64) -> Self {
        Self {
            learning_rate,
            lot_size,
            epochs,
            noise,
            seed,
            hidden_dim: 0,
            per_layer: false,
        }
    }

    pub fn validate(&self, train_size: usize) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.lot_size == 0 || self.lot_size > train_size {
            return Err(Error::InvalidParameter(format!(
                "lot size {} must lie in 1..={train_size}",
                self.lot_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, train_size: usize) -> usize {
        train_size.div_ceil(self.lot_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub mcc: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train: Metrics,
    pub validation: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochMetrics>,
    /// Exact-zero gradients replaced by random directions under VMF noise.
    pub zero_gradients: usize,
}

const EPOCH_TAG: u64 = 0xe90c;
const STEP_TAG: u64 = 0x57e9;

/// Runs `epochs · ⌈N/L⌉` steps. Each epoch shuffles the training set and cuts
/// it into lots of exactly `L` examples, wrapping around for the last one.
pub fn private_train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let n = data.train.len();
    cfg.validate(n)?;
    let shape = ModelShape::new(data.num_features(), data.num_classes, cfg.hidden_dim)?;
    let mut params = ModelParams::init(shape, cfg.seed);
    let blocks = shape.blocks();
    let partition = cfg.per_layer.then_some(blocks.as_slice());
    let steps_per_epoch = cfg.steps_per_epoch(n);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut zero_gradients = 0;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::substream(cfg.seed, &[EPOCH_TAG, epoch as u64]));
        for s in 0..steps_per_epoch {
            let step = epoch * steps_per_epoch + s;
            let grads: Vec<Vec<f64>> = (0..cfg.lot_size)
                .into_par_iter()
                .map(|i| {
                    let e = &data.train[order[(s * cfg.lot_size + i) % n]];
                    params.per_sample_gradient(e)
                })
                .collect::<Result<_>>()?;
            let mut r = rng::substream(cfg.seed, &[STEP_TAG, step as u64]);
            let noised = dp_noise_step_partitioned(&grads, &cfg.noise, partition, &mut r)?;
            zero_gradients += noised.zero_gradients;
            for (t, g) in params.theta.iter_mut().zip(&noised.gradient) {
                *t -= cfg.learning_rate * g;
            }
            if !params.is_finite() {
                return Err(Error::Diverged {
                    step,
                    reason: "non-finite parameter after update".into(),
                });
            }
        }
        let train = evaluate(&params, &data.train)?;
        if !train.mean_loss.is_finite() {
            return Err(Error::Diverged {
                step: (epoch + 1) * steps_per_epoch - 1,
                reason: format!("training loss became {}", train.mean_loss),
            });
        }
        let validation = if data.validation.is_empty() {
            None
        } else {
            Some(evaluate(&params, &data.validation)?)
        };
        history.push(EpochMetrics {
            epoch: epoch + 1,
            train,
            validation,
        });
    }
    Ok(TrainOutcome {
        params,
        history,
        zero_gradients,
    })
}

/// Accuracy, MCC and mean cross-entropy on a split.
pub fn evaluate(params: &ModelParams, split: &[Example]) -> Result<Metrics> {
    if split.is_empty() {
        return Err(Error::EmptyInput("evaluation split".into()));
    }
    let rows: Vec<(usize, f64)> = split
        .par_iter()
        .map(|e| {
            let p = params.predict_proba(&e.features)?;
            let loss = params.loss(e)?;
            Ok((model::argmax(&p), loss))
        })
        .collect::<Result<_>>()?;
    let preds: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let labels: Vec<usize> = split.iter().map(|e| e.label).collect();
    let correct = preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
    Ok(Metrics {
        accuracy: correct as f64 / split.len() as f64,
        mcc: mcc(&preds, &labels, params.shape.classes),
        mean_loss: rows.iter().map(|r| r.1).sum::<f64>() / split.len() as f64,
    })
}

/// Matthews correlation from the confusion matrix (reduces to the binary
/// formula for two classes). A zero denominator yields 0.
pub fn mcc(preds: &[usize], labels: &[usize], classes: usize) -> f64 {
    let mut p = vec![0.0; classes];
    let mut t = vec![0.0; classes];
    let mut c = 0.0;
    for (&a, &b) in preds.iter().zip(labels) {
        p[a] += 1.0;
        t[b] += 1.0;
        if a == b {
            c += 1.0;
        }
    }
    let s = preds.len() as f64;
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|a| a * a).sum();
    let tt: f64 = t.iter().map(|a| a * a).sum();
    let den = ((s * s - pp) * (s * s - tt)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        ((c * s - pt) / den).clamp(-1.0, 1.0)
    }
}

/// Train accuracy minus test accuracy, in percentage points.
pub fn train_test_gap(params: &ModelParams, data: &Dataset) -> Result<f64> {
    let train = evaluate(params, &data.train)?;
    let test = evaluate(params, &data.test)?;
    Ok(100.0 * (train.accuracy - test.accuracy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn separable(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut r = rng::stream(seed);
        let w: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut make = |count: usize| -> Vec<Example> {
            (0..count)
                .map(|_| {
                    let x: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
                    let label = usize::from(crate::sphere::dot(&w, &x) > 0.0);
                    Example {
                        features: x.into_iter().enumerate().map(|(i, v)| (i as u32, v)).collect(),
                        label,
                        tokens: Vec::new(),
                    }
                })
                .collect()
        };
        let train = make(n);
        let test = make(n / 2);
        Dataset {
            vocab: (0..dim).map(|i| format!("f{i}")).collect::<Vec<_>>().into(),
            num_classes: 2,
            train,
            validation: Vec::new(),
            test,
        }
    }

    #[test]
    fn noiseless_training_fits_separable_data() {
        let d = separable(200, 20, 1);
        let cfg = TrainConfig::new(0.5, 10, 50, NoiseSpec::none(), 3);
        let out = private_train(&d, &cfg).unwrap();
        assert_eq!(out.history.len(), 50);
        assert!(out.history.last().unwrap().train.accuracy >= 0.95);
    }

    #[test]
    fn training_is_deterministic() {
        let d = separable(100, 8, 2);
        for noise in [NoiseSpec::gaussian(1.0).unwrap(), NoiseSpec::vmf(10.0).unwrap()] {
            let mut cfg = TrainConfig::new(0.1, 16, 3, noise, 9);
            cfg.hidden_dim = 4;
            let a = private_train(&d, &cfg).unwrap();
            let b = private_train(&d, &cfg).unwrap();
            assert_eq!(a.params.theta, b.params.theta);
            cfg.seed = 10;
            assert_ne!(a.params.theta, private_train(&d, &cfg).unwrap().params.theta);
        }
    }

    #[test]
    fn near_deterministic_vmf_tracks_unit_scaled_descent() {
        let d = separable(200, 20, 4);
        let vmf = private_train(&d, &TrainConfig::new(0.5, 10, 20, NoiseSpec::vmf(1e8).unwrap(), 5)).unwrap();
        // Reference: the same loop with each gradient scaled to unit norm and no noise.
        let shape = ModelShape::new(20, 2, 0).unwrap();
        let mut p = ModelParams::init(shape, 5);
        let mut order: Vec<usize> = (0..200).collect();
        for epoch in 0..20u64 {
            order.shuffle(&mut rng::substream(5, &[EPOCH_TAG, epoch]));
            for s in 0..20 {
                let mut g = vec![0.0; p.len()];
                for i in 0..10 {
                    let gi = p.per_sample_gradient(&d.train[order[s * 10 + i]]).unwrap();
                    let nrm = crate::sphere::norm(&gi);
                    g.iter_mut().zip(&gi).for_each(|(a, b)| *a += b / nrm / 10.0);
                }
                p.theta.iter_mut().zip(&g).for_each(|(t, gi)| *t -= 0.5 * gi);
            }
        }
        let reference = evaluate(&p, &d.test).unwrap().accuracy;
        let got = evaluate(&vmf.params, &d.test).unwrap().accuracy;
        assert!((reference - got).abs() <= 0.02, "{reference} vs {got}");
    }

    #[test]
    fn huge_gaussian_noise_is_near_majority() {
        let d = separable(200, 20, 6);
        let majority = {
            let ones = d.test.iter().filter(|e| e.label == 1).count() as f64 / d.test.len() as f64;
            ones.max(1.0 - ones)
        };
        let accs: Vec<f64> = (0..5)
            .map(|seed| {
                let cfg = TrainConfig::new(0.5, 10, 5, NoiseSpec::gaussian(100.0).unwrap(), seed);
                evaluate(&private_train(&d, &cfg).unwrap().params, &d.test)
                    .unwrap()
                    .accuracy
            })
            .collect();
        let mean = crate::stats::mean(&accs);
        assert!((mean - 0.5).abs() < 0.15 && mean <= majority + 0.1, "{accs:?}");
    }

    #[test]
    fn mcc_cases() {
        let y = [0, 1, 1, 0, 1];
        assert_eq!(mcc(&y, &y, 2), 1.0);
        let inv: Vec<usize> = y.iter().map(|v| 1 - v).collect();
        assert_eq!(mcc(&inv, &y, 2), -1.0);
        assert_eq!(mcc(&[1, 1, 1], &[0, 1, 0], 2), 0.0);
        // Binary closed form: tp=2, tn=1, fp=1, fn=1.
        let got = mcc(&[1, 1, 0, 1, 0], &[1, 1, 0, 0, 1], 2);
        let want = (2.0 * 1.0 - 1.0 * 1.0) / (3.0f64 * 3.0 * 2.0 * 2.0).sqrt();
        assert!((got - want).abs() < 1e-15);
        let mut r = rng::stream(1);
        let a: Vec<usize> = (0..20000).map(|_| r.random_range(0..2)).collect();
        let b: Vec<usize> = (0..20000).map(|_| r.random_range(0..2)).collect();
        assert!(mcc(&a, &b, 2).abs() < 0.03);
    }

    #[test]
    fn gap_in_points() {
        let d = separable(100, 10, 7);
        let p = ModelParams::init(ModelShape::new(10, 2, 0).unwrap(), 0);
        let same = d.with_splits(d.train.clone(), Vec::new(), d.train.clone());
        assert_eq!(train_test_gap(&p, &same).unwrap(), 0.0);
        // Zero model predicts class 0: accuracy = share of label 0.
        let zeros: Vec<_> = d.train.iter().filter(|e| e.label == 0).cloned().collect();
        let ones: Vec<_> = d.train.iter().filter(|e| e.label == 1).cloned().collect();
        let half: Vec<_> = zeros.iter().take(10).chain(ones.iter().take(10)).cloned().collect();
        let gap = train_test_gap(&p, &d.with_splits(zeros.clone(), Vec::new(), half.clone())).unwrap();
        assert!((gap - 50.0).abs() < 1e-12);
        let neg = train_test_gap(&p, &d.with_splits(half, Vec::new(), zeros)).unwrap();
        assert!(neg < 0.0);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let d = separable(20, 4, 8);
        let bad = [
            TrainConfig::new(0.0, 4, 1, NoiseSpec::none(), 0),
            TrainConfig::new(0.1, 21, 1, NoiseSpec::none(), 0),
            TrainConfig::new(0.1, 4, 0, NoiseSpec::none(), 0),
        ];
        for cfg in bad {
            assert!(matches!(private_train(&d, &cfg), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut d = separable(20, 4, 9);
        d.train[0].features[0].1 = 1e300;
        let cfg = TrainConfig::new(1e10, 20, 3, NoiseSpec::none(), 0);
        assert!(matches!(private_train(&d, &cfg), Err(Error::Diverged { .. })));
    }
}
