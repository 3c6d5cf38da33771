//! Loss-based membership inference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::trainer::{Example, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiaResult {
    pub auc: f64,
    /// Largest `TPR - FPR` over all thresholds.
    pub leakage: f64,
    /// `TPR - FPR` when flagging samples whose loss is at most the mean member loss.
    pub leakage_fixed: f64,
}

impl MiaResult {
    /// Membership scores for members (`positives`) and non-members; higher
    /// means "more likely a member". `fixed_threshold` is on the score scale.
    pub fn from_scores(positives: &[f64], negatives: &[f64], fixed_threshold: f64) -> Result<Self> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::EmptyInput("membership scores".into()));
        }
        Ok(Self {
            auc: stats::auc(positives, negatives),
            leakage: stats::max_tpr_minus_fpr(positives, negatives),
            leakage_fixed: stats::tpr_minus_fpr(positives, negatives, fixed_threshold),
        })
    }
}

fn losses(model: &ModelParams, xs: &[Example]) -> Result<Vec<f64>> {
    xs.iter().map(|e| model.loss(e)).collect()
}

/// Vanilla attack with score `-loss`.
pub fn mia_loss_threshold(target: &ModelParams, members: &[Example], non_members: &[Example]) -> Result<MiaResult> {
    let pos: Vec<f64> = losses(target, members)?.into_iter().map(|l| -l).collect();
    let neg: Vec<f64> = losses(target, non_members)?.into_iter().map(|l| -l).collect();
    let fixed = if pos.is_empty() { 0.0 } else { stats::mean(&pos) };
    MiaResult::from_scores(&pos, &neg, fixed)
}

/// Reference-model attack: score = mean reference loss - target loss.
pub fn mia_reference(
    target: &ModelParams,
    references: &[ModelParams],
    members: &[Example],
    non_members: &[Example],
) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::EmptyInput("reference models".into()));
    }
    if let Some(r) = references.iter().find(|r| r.shape != target.shape) {
        return Err(Error::ShapeMismatch(format!(
            "reference model {:?} differs from target {:?}",
            r.shape, target.shape
        )));
    }
    let score = |xs: &[Example]| -> Result<Vec<f64>> {
        let t = losses(target, xs)?;
        let mut refs = vec![0.0; xs.len()];
        for r in references {
            for (acc, l) in refs.iter_mut().zip(losses(r, xs)?) {
                *acc += l / references.len() as f64;
            }
        }
        Ok(refs.iter().zip(t).map(|(r, t)| r - t).collect())
    };
    let (pos, neg) = (score(members)?, score(non_members)?);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyInput("membership samples".into()));
    }
    Ok(stats::auc(&pos, &neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::ModelShape;

    fn ex(i: u32, label: usize) -> Example {
        Example {
            features: vec![(i, 1.0)],
            label,
            tokens: Vec::new(),
        }
    }

    /// Linear model that is confident on feature `i` iff `theta` says so.
    fn model(confident: &[u32]) -> ModelParams {
        let shape = ModelShape::new(8, 2, 0).unwrap();
        let mut theta = vec![0.0; shape.num_params()];
        for &i in confident {
            theta[i as usize] = 40.0;
        }
        ModelParams::from_parts(shape, theta).unwrap()
    }

    #[test]
    fn perfect_separation() {
        let m = model(&[0, 1, 2]);
        let ins = [ex(0, 0), ex(1, 0), ex(2, 0)];
        let outs = [ex(3, 1), ex(4, 1)];
        let r = mia_loss_threshold(&m, &ins, &outs).unwrap();
        assert_eq!((r.auc, r.leakage), (1.0, 1.0));
    }

    #[test]
    fn identical_distributions_are_neutral() {
        let m = model(&[]);
        let xs: Vec<_> = (0..8).map(|i| ex(i, 0)).collect();
        let r = mia_loss_threshold(&m, &xs[..4], &xs[4..]).unwrap();
        assert_eq!((r.auc, r.leakage, r.leakage_fixed), (0.5, 0.0, 0.0));
    }

    #[test]
    fn score_example() {
        let r = MiaResult::from_scores(&[0.9, 0.8], &[0.7, 0.1], 0.85).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.leakage, 1.0);
        assert_eq!(r.leakage_fixed, 0.5);
        let neg = MiaResult::from_scores(&[0.2, 0.3], &[0.95, 0.5], 0.4).unwrap();
        assert!(neg.leakage_fixed < 0.0);
        assert!(MiaResult::from_scores(&[], &[1.0], 0.0).is_err());
    }

    #[test]
    fn reference_attack() {
        let target = model(&[0, 1, 2]);
        let ins = [ex(0, 0), ex(1, 0), ex(2, 0)];
        let outs = [ex(3, 0), ex(4, 0), ex(5, 0)];
        assert_eq!(
            mia_reference(&target, std::slice::from_ref(&target), &ins, &outs).unwrap(),
            0.5
        );
        let refs = [model(&[]), model(&[6])];
        assert_eq!(mia_reference(&target, &refs, &ins, &outs).unwrap(), 1.0);
        let other = ModelParams::init(ModelShape::new(9, 2, 0).unwrap(), 0);
        assert!(matches!(
            mia_reference(&target, &[other], &ins, &outs),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
