//! Directional privacy for private SGD, side by side with Gaussian DP-SGD,
//! plus the empirical calibration pipeline used to compare them.
//!
//! The crate is organized bottom-up:
//!
//! * [`sphere`]: unit-sphere geometry (normalization, angular and chord metrics).
//! * [`vmf`]: von Mises-Fisher log-density, sampler and the VMF mechanism.
//! * [`mechanisms`]: mechanism-agnostic gradient noising (Gaussian, VMF, none).
//! * [`accountant`]: Rényi-DP accounting for the subsampled Gaussian mechanism.
//! * [`trainer`]: bag-of-words surrogate classifier trained with private SGD.
//! * [`attacks`]: membership inference and gradient inversion.
//! * [`textmetrics`]: Jaccard, cosine, METEOR-lite and ROUGE-L.
//! * [`calibrate`]: noise sweeps producing utility-vs-attack tradeoff tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod attacks;
pub mod calibrate;
pub mod error;
pub mod mechanisms;
pub mod rng;
pub mod sphere;
pub mod stats;
pub mod textmetrics;
pub mod trainer;
pub mod vmf;

pub use accountant::PrivacyBudget;
pub use attacks::AttackReport;
pub use calibrate::TradeoffTable;
pub use error::{Error, Result};
pub use mechanisms::{NoiseKind, NoiseSpec};
pub use sphere::{OrthoDecomposition, UnitVector};
pub use trainer::{Dataset, ModelParams, TrainConfig};
pub use vmf::VmfParams;
