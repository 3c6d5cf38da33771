//! Bag-of-words softmax classifiers and their exact per-sample gradients.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::{Example, SparseVec};
use crate::error::{Error, Result};
use crate::rng;

/// Layer layout of a flattened parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub features: usize,
    pub classes: usize,
    /// 0 means a linear (multinomial logistic) model.
    pub hidden: usize,
}

impl ModelShape {
    pub fn new(features: usize, classes: usize, hidden: usize) -> Result<Self> {
        if features == 0 || classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "model needs features ≥ 1 and classes ≥ 2, got {features} and {classes}"
            )));
        }
        Ok(Self {
            features,
            classes,
            hidden,
        })
    }

    pub fn is_linear(&self) -> bool {
        self.hidden == 0
    }

    /// Width of the first layer's output.
    fn first_out(&self) -> usize {
        if self.is_linear() {
            self.classes
        } else {
            self.hidden
        }
    }

    /// Ranges of `[W1, b1]` (linear) or `[W1, b1, W2, b2]` (MLP), weights row-major
    /// with one row per output unit.
    pub fn blocks(&self) -> Vec<Range<usize>> {
        let (v, h, c) = (self.features, self.first_out(), self.classes);
        let mut out = vec![0..h * v, h * v..h * v + h];
        if !self.is_linear() {
            let s = h * v + h;
            out.push(s..s + c * h);
            out.push(s + c * h..s + c * h + c);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().last().map_or(0, |r| r.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub shape: ModelShape,
    pub theta: Vec<f64>,
}

/// Intermediate values of one forward pass.
struct Forward {
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

impl ModelParams {
    /// Zeros for the linear model; uniform in ±1/√fan_in weights and zero
    /// biases for the MLP.
    pub fn init(shape: ModelShape, seed: u64) -> Self {
        let mut theta = vec![0.0; shape.num_params()];
        if !shape.is_linear() {
            let mut r = rng::substream(seed, &[INIT_TAG]);
            let b = shape.blocks();
            let fill = |r: &mut rng::Stream, xs: &mut [f64], fan_in: usize| {
                let a = 1.0 / (fan_in as f64).sqrt();
                xs.iter_mut().for_each(|x| *x = r.random_range(-a..a));
            };
            fill(&mut r, &mut theta[b[0].clone()], shape.features);
            fill(&mut r, &mut theta[b[2].clone()], shape.hidden);
        }
        Self { shape, theta }
    }

    pub fn from_parts(shape: ModelShape, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != shape.num_params() {
            return Err(Error::DimensionMismatch {
                expected: shape.num_params(),
                actual: theta.len(),
            });
        }
        Ok(Self { shape, theta })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }

    fn check(&self, x: &SparseVec, label: usize) -> Result<()> {
        if let Some(&(i, _)) = x.iter().find(|&&(i, _)| i as usize >= self.shape.features) {
            return Err(Error::ShapeMismatch(format!(
                "feature index {i} outside model width {}",
                self.shape.features
            )));
        }
        if label >= self.shape.classes {
            return Err(Error::ShapeMismatch(format!(
                "label {label} outside {} classes",
                self.shape.classes
            )));
        }
        Ok(())
    }

    /// Affine map `W x + b` for a block pair stored at `w`, `b`.
    fn affine_sparse(&self, w: &Range<usize>, b: &Range<usize>, x: &SparseVec) -> Vec<f64> {
        let v = self.shape.features;
        let mut out = self.theta[b.clone()].to_vec();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.theta[w.start + r * v..w.start + (r + 1) * v];
            *o += x.iter().map(|&(i, xi)| row[i as usize] * xi).sum::<f64>();
        }
        out
    }

    fn forward(&self, x: &SparseVec) -> Forward {
        let b = self.shape.blocks();
        let z1 = self.affine_sparse(&b[0], &b[1], x);
        if self.shape.is_linear() {
            return Forward {
                hidden: Vec::new(),
                probs: softmax(&z1),
            };
        }
        let h: Vec<f64> = z1.iter().map(|z| z.tanh()).collect();
        let (w2, b2) = (&self.theta[b[2].clone()], &self.theta[b[3].clone()]);
        let z2: Vec<f64> = (0..self.shape.classes)
            .map(|c| b2[c] + crate::sphere::dot(&w2[c * h.len()..(c + 1) * h.len()], &h))
            .collect();
        Forward {
            hidden: h,
            probs: softmax(&z2),
        }
    }

    /// Class probabilities.
    pub fn predict_proba(&self, x: &SparseVec) -> Result<Vec<f64>> {
        self.check(x, 0)?;
        Ok(self.forward(x).probs)
    }

    /// Arg-max class, lowest index on ties.
    pub fn predict(&self, x: &SparseVec) -> Result<usize> {
        let p = self.predict_proba(x)?;
        Ok(argmax(&p))
    }

    /// Cross-entropy loss `−ln p_y`.
    pub fn loss(&self, ex: &Example) -> Result<f64> {
        self.check(&ex.features, ex.label)?;
        Ok(cross_entropy(&self.forward(&ex.features).probs, ex.label))
    }

    /// Exact gradient of the cross-entropy loss at one example.
    pub fn per_sample_gradient(&self, ex: &Example) -> Result<Vec<f64>> {
        self.check(&ex.features, ex.label)?;
        Ok(self.gradient_unchecked(&ex.features, ex.label))
    }

    pub(crate) fn gradient_unchecked(&self, x: &SparseVec, label: usize) -> Vec<f64> {
        let f = self.forward(x);
        let mut delta = f.probs;
        delta[label] -= 1.0;
        let shape = self.shape;
        let b = shape.blocks();
        let mut g = vec![0.0; shape.num_params()];
        let delta1 = if shape.is_linear() {
            delta
        } else {
            let h = &f.hidden;
            let nh = h.len();
            let w2 = &self.theta[b[2].clone()];
            for c in 0..shape.classes {
                for j in 0..nh {
                    g[b[2].start + c * nh + j] = delta[c] * h[j];
                }
                g[b[3].start + c] = delta[c];
            }
            (0..nh)
                .map(|j| {
                    let back: f64 = (0..shape.classes).map(|c| w2[c * nh + j] * delta[c]).sum();
                    back * (1.0 - h[j] * h[j])
                })
                .collect()
        };
        let v = shape.features;
        for (r, &d) in delta1.iter().enumerate() {
            for &(i, xi) in x {
                g[b[0].start + r * v + i as usize] = d * xi;
            }
            g[b[1].start + r] = d;
        }
        g
    }
}

const INIT_TAG: u64 = 0x1417;

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn cross_entropy(p: &[f64], label: usize) -> f64 {
    -p[label].max(f64::MIN_POSITIVE).ln()
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        )
        .0
}
