//! Mechanism-agnostic gradient noising.
//!
//! The Gaussian path clips each per-sample gradient to norm at most `C`, sums,
//! adds `N(0, sigma^2 C^2 I)` and divides by the lot size. The VMF path scales
//! every gradient to norm exactly 1, replaces each by an independent VMF draw
//! around it, and averages.

use std::fmt;
use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sphere::{self, UnitVector};
use crate::vmf::{self, VmfParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Gaussian,
    Vmf,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Vmf => "vmf",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(NoiseKind::None),
            "gaussian" => Ok(NoiseKind::Gaussian),
            "vmf" => Ok(NoiseKind::Vmf),
            other => Err(Error::InvalidParameter(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// Noise mechanism with its parameter: the noise multiplier `sigma` for
/// Gaussian, the concentration `kappa` for VMF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNoiseSpec")]
pub struct NoiseSpec {
    kind: NoiseKind,
    parameter: f64,
    clip_norm: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoiseSpec {
    kind: NoiseKind,
    #[serde(default)]
    parameter: f64,
    #[serde(default = "unit_clip")]
    clip_norm: f64,
}

fn unit_clip() -> f64 {
    1.0
}

impl TryFrom<RawNoiseSpec> for NoiseSpec {
    type Error = Error;
    fn try_from(r: RawNoiseSpec) -> Result<Self> {
        if r.clip_norm != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "clip norm is fixed to 1, got {}",
                r.clip_norm
            )));
        }
        NoiseSpec::new(r.kind, r.parameter)
    }
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, parameter: f64) -> Result<Self> {
        if !(parameter >= 0.0) || !parameter.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise parameter must be finite and >= 0, got {parameter}"
            )));
        }
        if kind == NoiseKind::None && parameter != 0.0 {
            return Err(Error::InvalidParameter("noise kind `none` takes parameter 0".into()));
        }
        Ok(Self {
            kind,
            parameter,
            clip_norm: 1.0,
        })
    }

    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            parameter: 0.0,
            clip_norm: 1.0,
        }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, sigma)
    }

    pub fn vmf(kappa: f64) -> Result<Self> {
        Self::new(NoiseKind::Vmf, kappa)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn parameter(&self) -> f64 {
        self.parameter
    }

    pub fn clip_norm(&self) -> f64 {
        self.clip_norm
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NoiseKind::None => write!(f, "none"),
            NoiseKind::Gaussian => write!(f, "gaussian(sigma={})", self.parameter),
            NoiseKind::Vmf => write!(f, "vmf(kappa={})", self.parameter),
        }
    }
}

/// `g / max(1, ||g|| / C)`.
pub fn clip(g: &[f64], clip_norm: f64) -> Vec<f64> {
    let n = sphere::norm(g);
    let s = (n / clip_norm).max(1.0);
    g.iter().map(|x| x / s).collect()
}

/// Sum of already-clipped vectors plus spherical Gaussian noise of
/// per-coordinate standard deviation `sigma * clip_norm`, divided by the
/// number of vectors.
pub fn gaussian_perturb_sum<R: Rng + ?Sized>(
    per_sample: &[Vec<f64>],
    sigma: f64,
    clip_norm: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let dim = lot_dim(per_sample)?;
    let mut acc = vec![0.0; dim];
    for g in per_sample {
        sphere::check_dims(dim, g.len())?;
        let n = sphere::norm(g);
        if n > clip_norm * (1.0 + 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "per-sample vector of norm {n} exceeds clip norm {clip_norm}"
            )));
        }
        sphere::axpy(1.0, g, &mut acc);
    }
    if sigma > 0.0 {
        let std = sigma * clip_norm;
        for a in acc.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *a += std * z;
        }
    }
    let l = per_sample.len() as f64;
    Ok(acc.into_iter().map(|a| a / l).collect())
}

/// Average of independent VMF draws centred on each input.
///
/// Draws for sample `i` come from a substream keyed by one value taken from
/// `rng` and by `i`, so they can run in parallel and still reproduce exactly.
pub fn vmf_perturb_mean<R: Rng + ?Sized>(per_sample: &[UnitVector], kappa: f64, rng: &mut R) -> Result<Vec<f64>> {
    let dim = lot_dim(per_sample)?;
    let key: u64 = rng.random();
    let draws = per_sample
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            sphere::check_dims(dim, u.dim())?;
            let mut r = rng::substream(key, &[i as u64]);
            vmf::sample(&VmfParams::new(u.clone(), kappa)?, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = vec![0.0; dim];
    for d in &draws {
        sphere::axpy(1.0, d.as_slice(), &mut acc);
    }
    let l = per_sample.len() as f64;
    Ok(acc.into_iter().map(|a| a / l).collect())
}

/// Result of one noising step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisedGradient {
    pub gradient: Vec<f64>,
    /// Exactly-zero per-sample gradients replaced by random directions (VMF only).
    pub zero_gradients: usize,
}

/// Clip-or-scale, noise, and average a lot of per-sample gradients.
pub fn dp_noise_step<R: Rng + ?Sized>(
    per_sample_grads: &[Vec<f64>],
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<NoisedGradient> {
    dp_noise_step_partitioned(per_sample_grads, spec, None, rng)
}

/// As [`dp_noise_step`], optionally applying VMF separately on disjoint
/// coordinate blocks (e.g. one per layer).
///
/// With blocks, each scaled gradient `v = sum_i lambda_i u_i` is split into its
/// block directions `u_i` (weights `lambda_i = ||v|_block||`), each `u_i` is
/// replaced by a VMF draw within its block, and the draws are recombined with
/// the same weights. The composed guarantee exponent is `2 kappa sqrt(m)`, see
/// [`crate::vmf::composed_bound_exponent`]. Gaussian and no-noise steps ignore
/// the blocks.
pub fn dp_noise_step_partitioned<R: Rng + ?Sized>(
    per_sample_grads: &[Vec<f64>],
    spec: &NoiseSpec,
    blocks: Option<&[Range<usize>]>,
    rng: &mut R,
) -> Result<NoisedGradient> {
    let dim = lot_dim(per_sample_grads)?;
    for g in per_sample_grads {
        sphere::check_dims(dim, g.len())?;
    }
    match spec.kind {
        NoiseKind::None => {
            let mut acc = vec![0.0; dim];
            for g in per_sample_grads {
                sphere::axpy(1.0, g, &mut acc);
            }
            let l = per_sample_grads.len() as f64;
            Ok(NoisedGradient {
                gradient: acc.into_iter().map(|a| a / l).collect(),
                zero_gradients: 0,
            })
        }
        NoiseKind::Gaussian => {
            let clipped: Vec<Vec<f64>> = per_sample_grads.iter().map(|g| clip(g, spec.clip_norm)).collect();
            Ok(NoisedGradient {
                gradient: gaussian_perturb_sum(&clipped, spec.parameter, spec.clip_norm, rng)?,
                zero_gradients: 0,
            })
        }
        NoiseKind::Vmf => {
            let mut zeros = 0;
            let mut scaled = Vec::with_capacity(per_sample_grads.len());
            for g in per_sample_grads {
                let (u, replaced) = sphere::normalize_or_random(g, rng)?;
                zeros += usize::from(replaced);
                scaled.push(u);
            }
            let gradient = match blocks {
                None => vmf_perturb_mean(&scaled, spec.parameter, rng)?,
                Some(blocks) => vmf_blockwise_mean(&scaled, blocks, spec.parameter, rng)?,
            };
            Ok(NoisedGradient {
                gradient,
                zero_gradients: zeros,
            })
        }
    }
}

fn vmf_blockwise_mean<R: Rng + ?Sized>(
    scaled: &[UnitVector],
    blocks: &[Range<usize>],
    kappa: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let dim = scaled[0].dim();
    let covered: usize = blocks.iter().map(|b| b.len()).sum();
    if covered != dim || blocks.iter().any(|b| b.end > dim || b.len() < 2) {
        return Err(Error::InvalidParameter(format!(
            "blocks must tile all {dim} coordinates with blocks of size >= 2"
        )));
    }
    let key: u64 = rng.random();
    let draws = scaled
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let mut out = vec![0.0; dim];
            for (j, b) in blocks.iter().enumerate() {
                let part = &u.as_slice()[b.clone()];
                let weight = sphere::norm(part);
                if weight == 0.0 {
                    continue;
                }
                let dir = UnitVector::new(part.to_vec())?;
                let mut r = rng::substream(key, &[i as u64, j as u64]);
                let y = vmf::sample(&VmfParams::new(dir, kappa)?, &mut r)?;
                for (o, v) in out[b.clone()].iter_mut().zip(y.as_slice()) {
                    *o = weight * v;
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = vec![0.0; dim];
    for d in &draws {
        sphere::axpy(1.0, d, &mut acc);
    }
    let l = scaled.len() as f64;
    Ok(acc.into_iter().map(|a| a / l).collect())
}

fn lot_dim<T: AsRef<[f64]>>(lot: &[T]) -> Result<usize> {
    lot.first()
        .map(|g| g.as_ref().len())
        .ok_or_else(|| Error::EmptyInput("lot has no per-sample gradients".into()))
}
