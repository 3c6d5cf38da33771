//! Feature reconstruction from a shared gradient.
//!
//! For both model variants the first layer's gradient of one example is the
//! outer product `δ xᵀ` and its bias gradient is `δ`, so the input is the
//! least-squares factor `x = Gᵀδ / ‖δ‖²`. Noised gradients are fitted with a
//! projected alternating least-squares match of the rank-1 structure
//! `(G, g_b) ≈ (u xᵀ, u)` with `x ≥ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{NoiseKind, NoiseSpec};
use crate::sphere::{dot, norm};
use crate::trainer::{ModelShape, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    /// Estimated bag-of-words counts.
    pub features: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl Inversion {
    /// Tokens in vocabulary order, each repeated by its rounded count (at
    /// least once). Keeps the `max_tokens` largest coordinates.
    pub fn tokens(&self, vocab: &Vocabulary, max_tokens: usize) -> Vec<String> {
        let mut idx: Vec<usize> = (0..self.features.len()).filter(|&i| self.features[i] > 0.5).collect();
        idx.sort_by(|&a, &b| self.features[b].total_cmp(&self.features[a]).then(a.cmp(&b)));
        let mut out = Vec::new();
        let mut kept = Vec::new();
        for i in idx {
            let c = (self.features[i].round() as usize).max(1);
            if out.len() + c > max_tokens {
                break;
            }
            out.resize(out.len() + c, ());
            kept.push((i, c));
        }
        kept.sort_unstable();
        kept.into_iter()
            .flat_map(|(i, c)| std::iter::repeat_n(vocab.token(i as u32).unwrap_or("").to_string(), c))
            .collect()
    }
}

/// Relative change in the fitted factors below which the iterative match stops.
pub const MATCH_TOLERANCE: f64 = 1e-9;

/// Reconstructs bag-of-words features from a (possibly noised) per-sample
/// gradient of a model with `shape`.
pub fn gradient_inversion(shared: &[f64], shape: ModelShape, noise: &NoiseSpec, budget: usize) -> Result<Inversion> {
    if shared.len() != shape.num_params() {
        return Err(Error::DimensionMismatch {
            expected: shape.num_params(),
            actual: shared.len(),
        });
    }
    let blocks = shape.blocks();
    let g = &shared[blocks[0].clone()];
    let gb = &shared[blocks[1].clone()];
    let v = shape.features;
    let rows = gb.len();
    let project = |u: &[f64], nonneg: bool| -> Vec<f64> {
        let uu = dot(u, u);
        (0..v)
            .map(|j| {
                let x = (0..rows).map(|r| g[r * v + j] * u[r]).sum::<f64>() / uu;
                if nonneg {
                    x.max(0.0)
                } else {
                    x
                }
            })
            .collect()
    };
    if norm(gb) == 0.0 {
        return Ok(Inversion {
            features: vec![0.0; v],
            converged: false,
            iterations: 0,
        });
    }
    if noise.kind() == NoiseKind::None {
        return Ok(Inversion {
            features: project(gb, false),
            converged: true,
            iterations: 0,
        });
    }
    let mut u = gb.to_vec();
    let mut x = project(&u, true);
    for it in 1..=budget {
        let xx = dot(&x, &x) + 1.0;
        let new_u: Vec<f64> = (0..rows)
            .map(|r| (dot(&g[r * v..(r + 1) * v], &x) + gb[r]) / xx)
            .collect();
        if norm(&new_u) == 0.0 {
            break;
        }
        let new_x = project(&new_u, true);
        let change = diff_norm(&new_x, &x) / norm(&new_x).max(f64::MIN_POSITIVE) + diff_norm(&new_u, &u) / norm(&new_u);
        u = new_u;
        x = new_x;
        if change < MATCH_TOLERANCE {
            return Ok(Inversion {
                features: x,
                converged: true,
                iterations: it,
            });
        }
    }
    Ok(Inversion {
        features: x,
        converged: false,
        iterations: budget,
    })
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
