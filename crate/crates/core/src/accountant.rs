//! Rényi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! Per-order RDP of one step follows Mironov, Talwar and Zhang (2019): an exact
//! binomial expansion for integer orders and the two-sided erfc series for
//! fractional ones. Composition over steps is additive. Conversion to
//! `(epsilon, delta)` is available in the classic form
//! `min_a RDP(a) + ln(1/delta)/(a-1)` and the tighter form of Balle et al.
//! (2020) used by Opacus.
//!
//! Training here uses shuffled fixed-size lots rather than Poisson sampling;
//! accounting with `q = L/N` is the usual approximation for that setup.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Bracket searched by [`sigma_for_target_epsilon`].
pub const SIGMA_BRACKET: (f64, f64) = (1e-3, 1e2);

/// Default order grid: 1.1, 1.2, ..., 10.9 then 12, ..., 63.
pub fn default_orders() -> Vec<f64> {
    (1..100)
        .map(|x| 1.0 + f64::from(x) / 10.0)
        .chain((12..64).map(f64::from))
        .collect()
}

/// RDP -> (epsilon, delta) conversion rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conversion {
    Classic,
    Tight,
}

/// Target budget and the sampling shape it is spent over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    /// `q = L / N`
    pub sample_rate: f64,
    /// `T = epochs * ceil(N / L)`
    pub steps: u64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, sample_rate: f64, steps: u64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if !(sample_rate > 0.0 && sample_rate <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must lie in (0, 1], got {sample_rate}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("steps must be >= 1".into()));
        }
        Ok(Self {
            epsilon,
            delta,
            sample_rate,
            steps,
        })
    }
}

/// Training-set size, lot size and epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetShape {
    pub examples: u64,
    pub batch: u64,
    pub epochs: u64,
}

impl DatasetShape {
    pub fn new(examples: u64, batch: u64, epochs: u64) -> Result<Self> {
        if examples == 0 || batch == 0 || epochs == 0 || batch > examples {
            return Err(Error::InvalidParameter(format!(
                "invalid shape: N={examples}, batch={batch}, epochs={epochs}"
            )));
        }
        Ok(Self {
            examples,
            batch,
            epochs,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.batch as f64 / self.examples as f64
    }

    pub fn steps(&self) -> u64 {
        self.epochs * self.examples.div_ceil(self.batch)
    }

    /// `1 / N`, the default delta.
    pub fn default_delta(&self) -> f64 {
        1.0 / self.examples as f64
    }

    pub fn budget(&self, epsilon: f64, delta: Option<f64>) -> Result<PrivacyBudget> {
        PrivacyBudget::new(
            epsilon,
            delta.unwrap_or_else(|| self.default_delta()),
            self.sample_rate(),
            self.steps(),
        )
    }
}

/// Order grid plus conversion rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpAccountant {
    pub orders: Vec<f64>,
    pub conversion: Conversion,
}

impl Default for RdpAccountant {
    fn default() -> Self {
        Self {
            orders: default_orders(),
            conversion: Conversion::Tight,
        }
    }
}

impl RdpAccountant {
    /// `(epsilon, best order)` after `steps` subsampled Gaussian steps.
    pub fn epsilon(&self, sigma: f64, sample_rate: f64, steps: u64, delta: f64) -> Result<(f64, f64)> {
        let rdp = rdp_of_subsampled_gaussian(sigma, sample_rate, steps, &self.orders)?;
        match self.conversion {
            Conversion::Classic => epsilon_from_rdp(&rdp, &self.orders, delta),
            Conversion::Tight => epsilon_from_rdp_tight(&rdp, &self.orders, delta),
        }
    }

    /// Smallest noise multiplier (to relative width 1e-4) whose accounted
    /// epsilon does not exceed the budget's.
    pub fn sigma_for_target_epsilon(&self, budget: &PrivacyBudget) -> Result<f64> {
        let eps = |s: f64| {
            self.epsilon(s, budget.sample_rate, budget.steps, budget.delta)
                .map(|(e, _)| e)
        };
        let (mut lo, mut hi) = SIGMA_BRACKET;
        let (eps_lo, eps_hi) = (eps(lo)?, eps(hi)?);
        if !(eps_hi <= budget.epsilon) || eps_lo <= budget.epsilon {
            return Err(Error::Infeasible {
                target: budget.epsilon,
                lo,
                hi,
                eps_lo,
                eps_hi,
            });
        }
        let mut eps_at_hi = eps_hi;
        // Keep halving past the 1e-4 width until epsilon is tight at the
        // boundary too; steep regions (tiny sigma) need the extra digits.
        while hi / lo - 1.0 > 1e-4 || (eps_at_hi < 0.999 * budget.epsilon && hi / lo - 1.0 > 1e-13) {
            let mid = (lo * hi).sqrt();
            let e = eps(mid)?;
            if e <= budget.epsilon {
                hi = mid;
                eps_at_hi = e;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// [`RdpAccountant::sigma_for_target_epsilon`] with the default accountant.
pub fn sigma_for_target_epsilon(budget: &PrivacyBudget) -> Result<f64> {
    RdpAccountant::default().sigma_for_target_epsilon(budget)
}

/// Cumulative RDP at each order after `steps` steps. `sigma = 0` yields
/// `+inf` at every order.
pub fn rdp_of_subsampled_gaussian(sigma: f64, sample_rate: f64, steps: u64, orders: &[f64]) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    if !(0.0..=1.0).contains(&sample_rate) {
        return Err(Error::InvalidParameter(format!(
            "sample rate {sample_rate} outside [0, 1]"
        )));
    }
    if let Some(a) = orders.iter().find(|&&a| !(a > 1.0)) {
        return Err(Error::InvalidParameter(format!("RDP orders must exceed 1, got {a}")));
    }
    Ok(orders
        .iter()
        .map(|&a| steps as f64 * rdp_single_step(sample_rate, sigma, a))
        .collect())
}

fn rdp_single_step(q: f64, sigma: f64, alpha: f64) -> f64 {
    if sigma == 0.0 {
        return f64::INFINITY;
    }
    if q == 0.0 {
        return 0.0;
    }
    if q == 1.0 {
        return alpha / (2.0 * sigma * sigma);
    }
    if alpha.is_infinite() {
        return f64::INFINITY;
    }
    let log_a = if alpha.fract() == 0.0 {
        log_a_int(q, sigma, alpha as u64)
    } else {
        log_a_frac(q, sigma, alpha)
    };
    log_a / (alpha - 1.0)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

/// `ln(exp(a) - exp(b))`, requires `a >= b`.
fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a <= b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

fn ln_binom(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

fn log_a_int(q: f64, sigma: f64, alpha: u64) -> f64 {
    let a = alpha as f64;
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    (0..=alpha).fold(f64::NEG_INFINITY, |acc, i| {
        let i = i as f64;
        let term = ln_binom(a, i) + i * lq + (a - i) * l1q + (i * i - i) / (2.0 * sigma * sigma);
        log_add(acc, term)
    })
}

fn log_a_frac(q: f64, sigma: f64, alpha: f64) -> f64 {
    let (mut a0, mut a1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let z0 = sigma * sigma * (1.0 / q - 1.0).ln() + 0.5;
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let s2 = std::f64::consts::SQRT_2 * sigma;
    // generalized binomial coefficient C(alpha, i), tracked as sign and log-magnitude
    let mut log_coef = 0.0;
    let mut positive = true;
    let mut i = 0u64;
    loop {
        let fi = i as f64;
        let j = alpha - fi;
        let t0 = log_coef + fi * lq + j * l1q;
        let t1 = log_coef + j * lq + fi * l1q;
        let e0 = 0.5f64.ln() + log_erfc((fi - z0) / s2);
        let e1 = 0.5f64.ln() + log_erfc((z0 - j) / s2);
        let s0 = t0 + (fi * fi - fi) / (2.0 * sigma * sigma) + e0;
        let s1 = t1 + (j * j - j) / (2.0 * sigma * sigma) + e1;
        if positive {
            a0 = log_add(a0, s0);
            a1 = log_add(a1, s1);
        } else {
            a0 = log_sub(a0, s0);
            a1 = log_sub(a1, s1);
        }
        if s0.max(s1) < -30.0 || i > 100_000 {
            break;
        }
        log_coef += (alpha - fi).abs().ln() - (fi + 1.0).ln();
        if alpha - fi < 0.0 {
            positive = !positive;
        }
        i += 1;
    }
    log_add(a0, a1)
}

/// `ln erfc(x)` without underflow for large positive `x`.
fn log_erfc(x: f64) -> f64 {
    if x < 25.0 {
        return erfc(x).ln();
    }
    let x2 = x * x;
    let inv = 1.0 / (2.0 * x2);
    let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
    -x2 - (x * std::f64::consts::PI.sqrt()).ln() + series.ln()
}

fn check_aligned(rdp: &[f64], orders: &[f64]) -> Result<()> {
    if rdp.is_empty() || orders.is_empty() {
        return Err(Error::EmptyInput("RDP curve has no orders".into()));
    }
    if rdp.len() != orders.len() {
        return Err(Error::DimensionMismatch {
            expected: orders.len(),
            actual: rdp.len(),
        });
    }
    Ok(())
}

fn argmin(eps: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    eps.fold(
        (f64::INFINITY, f64::NAN),
        |best, (e, a)| {
            if e < best.0 {
                (e, a)
            } else {
                best
            }
        },
    )
}

/// Classic conversion `min_a [RDP(a) + ln(1/delta)/(a-1)]`; returns
/// `(epsilon, argmin order)`, `(+inf, NaN)` if every order is infinite.
pub fn epsilon_from_rdp(rdp: &[f64], orders: &[f64], delta: f64) -> Result<(f64, f64)> {
    check_aligned(rdp, orders)?;
    let ld = (1.0 / delta).ln();
    Ok(argmin(rdp.iter().zip(orders).map(|(&r, &a)| (r + ld / (a - 1.0), a))))
}

/// Tighter conversion `RDP(a) - (ln delta + ln a)/(a-1) + ln((a-1)/a)`,
/// minimized over orders.
pub fn epsilon_from_rdp_tight(rdp: &[f64], orders: &[f64], delta: f64) -> Result<(f64, f64)> {
    check_aligned(rdp, orders)?;
    let ld = delta.ln();
    Ok(argmin(rdp.iter().zip(orders).map(|(&r, &a)| {
        let e = r - (ld + a.ln()) / (a - 1.0) + ((a - 1.0) / a).ln();
        (e.max(0.0), a)
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rdp_is_additive_in_steps() {
        let orders = default_orders();
        let one = rdp_of_subsampled_gaussian(0.8, 0.02, 100, &orders).unwrap();
        let two = rdp_of_subsampled_gaussian(0.8, 0.02, 200, &orders).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn full_batch_matches_gaussian_closed_form() {
        let orders = [1.5, 2.0, 7.0, 32.0];
        let rdp = rdp_of_subsampled_gaussian(2.0, 1.0, 10, &orders).unwrap();
        for (r, a) in rdp.iter().zip(orders) {
            assert!((r - 10.0 * a / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_sigma_is_infinite() {
        let rdp = rdp_of_subsampled_gaussian(0.0, 0.1, 1, &[2.0, 3.5]).unwrap();
        assert!(rdp.iter().all(|r| r.is_infinite()));
        let (e, _) = epsilon_from_rdp(&rdp, &[2.0, 3.5], 1e-5).unwrap();
        assert!(e.is_infinite());
    }

    #[test]
    fn integer_and_fractional_branches_agree_nearby() {
        // RDP is continuous in the order.
        let a = rdp_single_step(0.05, 1.1, 4.0);
        let b = rdp_single_step(0.05, 1.1, 4.0 + 1e-7);
        assert!((a - b).abs() < 1e-6 * a);
    }

    #[test]
    fn small_sample_rate_matches_quadratic_regime() {
        // Second-order expansion of the binomial sum in q:
        // RDP ~ a q^2 (exp(1/sigma^2) - 1) / 2.
        let (q, s, a) = (1e-3, 4.0, 8.0);
        let r = rdp_single_step(q, s, a);
        let approx = a * q * q * ((1.0 / (s * s)).exp() - 1.0) / 2.0;
        assert!((r / approx - 1.0).abs() < 0.01, "{r} vs {approx}");
    }

    #[test]
    fn classic_conversion_example() {
        let (e, a) = epsilon_from_rdp(&[0.0], &[2.0], 0.1).unwrap();
        assert!((e - 10f64.ln()).abs() < 1e-12);
        assert_eq!(a, 2.0);
        assert!(epsilon_from_rdp(&[], &[], 0.1).is_err());
        assert!(epsilon_from_rdp(&[1.0], &[2.0, 3.0], 0.1).is_err());
    }

    #[test]
    fn sst2_shape_at_unit_sigma() {
        let shape = DatasetShape::new(53_710, 128, 4).unwrap();
        let (e, _) = RdpAccountant::default()
            .epsilon(1.0, shape.sample_rate(), shape.steps(), 1e-5)
            .unwrap();
        assert!((0.75..=1.25).contains(&e), "{e}");
    }

    #[test]
    fn gpt2_cola_sigma_at_unit_epsilon() {
        let shape = DatasetShape::new(5056, 128, 30).unwrap();
        let s = sigma_for_target_epsilon(&shape.budget(1.0, None).unwrap()).unwrap();
        assert!((s / 3.06 - 1.0).abs() <= 0.25, "{s}");
        let shape = DatasetShape::new(5056, 128, 10).unwrap();
        let s = sigma_for_target_epsilon(&shape.budget(1e6, None).unwrap()).unwrap();
        assert!((s / 0.014 - 1.0).abs() <= 0.25, "{s}");
    }

    #[test]
    fn infeasible_target_reports_bracket() {
        let shape = DatasetShape::new(1000, 1000, 1).unwrap();
        let b = shape.budget(1e-6, Some(1e-5)).unwrap();
        match sigma_for_target_epsilon(&b) {
            Err(Error::Infeasible { lo, hi, eps_hi, .. }) => {
                assert_eq!((lo, hi), SIGMA_BRACKET);
                assert!(eps_hi > 1e-6);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(1.0, 0.0, 0.1, 1).is_err());
        assert!(PrivacyBudget::new(1.0, 1e-5, 1.5, 1).is_err());
        assert!(PrivacyBudget::new(1.0, 1e-5, 0.1, 0).is_err());
        assert!(PrivacyBudget::new(0.0, 1e-5, 0.1, 1).is_err());
        assert!(DatasetShape::new(10, 20, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn epsilon_monotone(
            sigma in 0.3f64..5.0,
            q in 0.001f64..0.2,
            steps in 1u64..2000,
            bump in 1.01f64..2.0,
        ) {
            let acc = RdpAccountant::default();
            let base = acc.epsilon(sigma, q, steps, 1e-5).unwrap().0;
            prop_assert!(acc.epsilon(sigma * bump, q, steps, 1e-5).unwrap().0 <= base + 1e-9);
            prop_assert!(acc.epsilon(sigma, q, steps + 10, 1e-5).unwrap().0 >= base - 1e-9);
            prop_assert!(acc.epsilon(sigma, (q * bump).min(1.0), steps, 1e-5).unwrap().0 >= base - 1e-9);
        }

        #[test]
        fn conversion_monotone_in_rdp(
            rdp in proptest::collection::vec(0.0f64..50.0, 5),
            idx in 0usize..5,
            bump in 0.0f64..10.0,
        ) {
            let orders = [1.5, 2.0, 4.0, 8.0, 32.0];
            let base = epsilon_from_rdp(&rdp, &orders, 1e-5).unwrap().0;
            let mut up = rdp.clone();
            up[idx] += bump;
            prop_assert!(epsilon_from_rdp(&up, &orders, 1e-5).unwrap().0 >= base);
        }

        #[test]
        fn sigma_round_trip(log_eps in -0.5f64..2.5, n in 500u64..20_000, epochs in 1u64..20) {
            let shape = DatasetShape::new(n, 64, epochs).unwrap();
            let b = shape.budget(10f64.powf(log_eps), None).unwrap();
            let acc = RdpAccountant::default();
            let s = acc.sigma_for_target_epsilon(&b).unwrap();
            let (e, _) = acc.epsilon(s, b.sample_rate, b.steps, b.delta).unwrap();
            prop_assert!(e <= b.epsilon && e >= 0.999 * b.epsilon, "eps {} target {}", e, b.epsilon);
            let bigger = shape.budget(b.epsilon * 2.0, None).unwrap();
            prop_assert!(acc.sigma_for_target_epsilon(&bigger).unwrap() < s);
        }
    }
}
