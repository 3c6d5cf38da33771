//! The von Mises-Fisher distribution on S^{K-1} and the VMF mechanism.
//!
//! Densities are with respect to the surface measure on the sphere:
//! `f(y) = C_K(kappa) exp(kappa mu.y)`, with
//! `C_K(kappa) = kappa^{K/2-1} / ((2 pi)^{K/2} I_{K/2-1}(kappa))`.
//! The sampler never evaluates Bessel functions.

mod bessel;

pub use bessel::{bessel_i_ratio, log_bessel_i};

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::sphere::{self, OrthoDecomposition, UnitVector};

/// Hard cap on rejection-loop iterations for a single draw.
pub const MAX_REJECTIONS: usize = 1_000_000;

/// Mean direction and concentration of a VMF distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmfParams {
    mean_direction: UnitVector,
    concentration: f64,
}

impl VmfParams {
    /// `concentration = 0` is the uniform distribution on the sphere.
    pub fn new(mean_direction: UnitVector, concentration: f64) -> Result<Self> {
        if !(concentration >= 0.0) || concentration.is_infinite() {
            return Err(Error::InvalidParameter(format!(
                "concentration must be finite and >= 0, got {concentration}"
            )));
        }
        Ok(Self {
            mean_direction,
            concentration,
        })
    }

    pub fn mean_direction(&self) -> &UnitVector {
        &self.mean_direction
    }

    pub fn concentration(&self) -> f64 {
        self.concentration
    }

    pub fn dim(&self) -> usize {
        self.mean_direction.dim()
    }
}

/// `ln C_K(kappa)`.
pub fn log_normalizer(dim: usize, kappa: f64) -> f64 {
    let half = dim as f64 / 2.0;
    if kappa == 0.0 {
        // reciprocal surface area 2 pi^{K/2} / Gamma(K/2)
        return -(2f64.ln() + half * PI.ln() - ln_gamma(half));
    }
    (half - 1.0) * kappa.ln() - half * (2.0 * PI).ln() - log_bessel_i(half - 1.0, kappa)
}

/// Mean resultant length `A_K(kappa) = E[mu.y] = I_{K/2}(kappa) / I_{K/2-1}(kappa)`.
pub fn mean_resultant_length(dim: usize, kappa: f64) -> f64 {
    bessel_i_ratio(dim as f64 / 2.0 - 1.0, kappa)
}

pub fn log_density(p: &VmfParams, y: &UnitVector) -> Result<f64> {
    let c = p.mean_direction.dot(y)?;
    Ok(log_normalizer(p.dim(), p.concentration) + p.concentration * c)
}

/// One VMF draw (Wood's rejection scheme for `w = mu.y`, a uniform tangent
/// direction, and a Householder reflection taking `e_1` to `mu`).
pub fn sample<R: Rng + ?Sized>(p: &VmfParams, rng: &mut R) -> Result<UnitVector> {
    let dim = p.dim();
    let (w, sin) = sample_cosine(dim, p.concentration, rng)?;

    // Point around e_1: (w, sin * v), v uniform on S^{K-2}.
    let mut y = vec![0.0; dim];
    y[0] = w;
    let tangent = loop {
        let v: Vec<f64> = (1..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = sphere::norm(&v);
        if n > 0.0 {
            break v.into_iter().map(|x| x / n).collect::<Vec<_>>();
        }
    };
    for (yi, ti) in y[1..].iter_mut().zip(&tangent) {
        *yi = sin * ti;
    }

    // Reflect e_1 onto mu.
    let mu = p.mean_direction.as_slice();
    let mut u: Vec<f64> = mu.iter().map(|m| -m).collect();
    u[0] += 1.0;
    let uu = sphere::dot(&u, &u);
    if uu > 0.0 {
        let s = 2.0 * sphere::dot(&u, &y) / uu;
        sphere::axpy(-s, &u, &mut y);
    }
    UnitVector::new(y)
}

/// Draws `(w, sqrt(1 - w^2))` from the marginal `exp(kappa w) (1 - w^2)^{(K-3)/2}`.
///
/// All quantities are rewritten in terms of `b` and the Beta draw so that
/// nothing cancels as `kappa -> infinity`.
fn sample_cosine<R: Rng + ?Sized>(dim: usize, kappa: f64, rng: &mut R) -> Result<(f64, f64)> {
    let m = (dim - 1) as f64;
    let b = m / (2.0 * kappa + (4.0 * kappa * kappa + m * m).sqrt());
    let beta = Beta::new(m / 2.0, m / 2.0)
        .map_err(|e| Error::InvalidParameter(format!("beta({}, {}): {e}", m / 2.0, m / 2.0)))?;
    let log_half_1pb = ((1.0 + b) / 2.0).ln();
    for _ in 0..MAX_REJECTIONS {
        let z: f64 = beta.sample(rng);
        let denom = 1.0 - (1.0 - b) * z;
        // kappa (w - x0) + (K-1) ln((1 - x0 w) / (1 - x0^2))
        let score = kappa * 2.0 * b * (1.0 - 2.0 * z) / ((1.0 + b) * denom) + m * (log_half_1pb - denom.ln());
        let u: f64 = rng.random();
        if score >= u.ln() {
            let one_minus_w = 2.0 * b * z / denom;
            let w = 1.0 - one_minus_w;
            let sin = (4.0 * b * z * (1.0 - z)).sqrt() / denom;
            return Ok((w, sin.min(1.0)));
        }
    }
    Err(Error::SamplerStalled(MAX_REJECTIONS))
}

/// The VMF mechanism: releases a draw centred on `x` with concentration `epsilon`.
pub fn mechanism_perturb<R: Rng + ?Sized>(x: &UnitVector, epsilon: f64, rng: &mut R) -> Result<UnitVector> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mechanism epsilon must be positive, got {epsilon}"
        )));
    }
    sample(&VmfParams::new(x.clone(), epsilon)?, rng)
}

/// Independent mechanism draws for each orthogonal component.
#[derive(Debug, Clone)]
pub struct ComposedDraw {
    pub components: Vec<UnitVector>,
    /// Exponent of the composed guarantee, `2 epsilon sqrt(m)`.
    pub bound_exponent: f64,
}

pub fn composed_bound_exponent(epsilon: f64, components: usize) -> f64 {
    2.0 * epsilon * (components as f64).sqrt()
}

pub fn compose_orthogonal<R: Rng + ?Sized>(d: &OrthoDecomposition, epsilon: f64, rng: &mut R) -> Result<ComposedDraw> {
    let components = d
        .components()
        .iter()
        .map(|u| mechanism_perturb(u, epsilon, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComposedDraw {
        bound_exponent: composed_bound_exponent(epsilon, components.len()),
        components,
    })
}
