//! Logarithm of the modified Bessel function of the first kind, `ln I_nu(x)`.
//!
//! Orders `nu >= DEBYE_MIN_ORDER` use the uniform asymptotic (Debye)
//! expansion directly. Lower orders start from the expansion at a shifted
//! order with the same fractional part and run the downward three-term
//! recurrence `I_{m-1} = (2m/x) I_m + I_{m+1}`, which is stable for `I`.
//! Everything is carried in log space, so `x` up to ~1e300 is fine.

use std::f64::consts::PI;

const DEBYE_MIN_ORDER: f64 = 50.0;

/// `ln I_nu(x)` for `nu >= 0`, `x >= 0`.
pub fn log_bessel_i(nu: f64, x: f64) -> f64 {
    assert!(nu >= 0.0 && x >= 0.0, "log_bessel_i needs nu >= 0 and x >= 0");
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if nu >= DEBYE_MIN_ORDER {
        return debye(nu, x);
    }
    let top = nu + (DEBYE_MIN_ORDER - nu).ceil();
    let mut log_i = debye(top, x);
    // ratio I_{m+1} / I_m at m = top
    let mut ratio = (debye(top + 1.0, x) - log_i).exp();
    let mut m = top;
    while m > nu + 0.5 {
        let factor = 2.0 * m / x + ratio;
        log_i += factor.ln();
        ratio = 1.0 / factor;
        m -= 1.0;
    }
    log_i
}

/// Ratio `I_{nu+1}(x) / I_nu(x)`.
pub fn bessel_i_ratio(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    (log_bessel_i(nu + 1.0, x) - log_bessel_i(nu, x)).exp()
}

fn debye(nu: f64, x: f64) -> f64 {
    let z = x / nu;
    let s = z.hypot(1.0);
    let t = 1.0 / s;
    let eta = s + (z / (1.0 + s)).ln();
    let t2 = t * t;
    let u1 = t * (3.0 - 5.0 * t2) / 24.0;
    let u2 = t2 * (81.0 + t2 * (-462.0 + t2 * 385.0)) / 1152.0;
    let u3 = t * t2 * (30375.0 + t2 * (-369603.0 + t2 * (765765.0 - t2 * 425425.0))) / 414720.0;
    let u4 = t2 * t2 * (4465125.0 + t2 * (-94121676.0 + t2 * (349922430.0 + t2 * (-446185740.0 + t2 * 185910725.0))))
        / 39813120.0;
    let u5 = t2
        * t2
        * t
        * (1519035525.0
            + t2 * (-49286948607.0
                + t2 * (284499769554.0 + t2 * (-614135872350.0 + t2 * (566098157625.0 - t2 * 188699385875.0)))))
        / 6688604160.0;
    let u6 = t2
        * t2
        * t2
        * (2757049477875.0
            + t2 * (-127577298354750.0
                + t2 * (1050760774457901.0
                    + t2 * (-3369032068261860.0
                        + t2 * (5104696716244125.0 + t2 * (-3685299006138750.0 + t2 * 1023694168371875.0))))))
        / 4815794995200.0;
    let inv = 1.0 / nu;
    let series = 1.0 + inv * (u1 + inv * (u2 + inv * (u3 + inv * (u4 + inv * (u5 + inv * u6)))));
    nu * eta - 0.5 * (2.0 * PI * nu).ln() - 0.5 * s.ln() + series.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::ln_gamma;

    /// Power series summed in log space; the independent oracle.
    fn series(nu: f64, x: f64) -> f64 {
        let lx = (x / 2.0).ln();
        let terms: Vec<f64> = (0..4000)
            .map(|k| {
                let k = k as f64;
                (2.0 * k + nu) * lx - ln_gamma(k + 1.0) - ln_gamma(k + nu + 1.0)
            })
            .collect();
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    }

    fn log_sinh(x: f64) -> f64 {
        x + (-(-2.0 * x).exp()).ln_1p() - 2f64.ln()
    }

    #[test]
    fn half_order_closed_form() {
        for &x in &[1e-3, 0.5, 2.0, 30.0, 700.0, 1e5, 1e8] {
            let exact = 0.5 * (2.0 / (PI * x)).ln() + log_sinh(x);
            let got = log_bessel_i(0.5, x);
            assert!(
                (got - exact).abs() <= 1e-11 * exact.abs().max(1.0),
                "x={x}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn integer_order_reference_values() {
        let cases = [
            (0.0, 1.0, 1.266_065_877_752_008_4),
            (0.0, 10.0, 2_815.716_628_466_254),
            (1.0, 1.0, 0.565_159_103_992_485_1),
            (1.0, 10.0, 2_670.988_303_701_255),
        ];
        for (nu, x, v) in cases {
            let got = log_bessel_i(nu, x);
            assert!((got - f64::ln(v)).abs() < 1e-12, "I_{nu}({x}): {got} vs {}", f64::ln(v));
        }
    }

    #[test]
    fn matches_power_series() {
        for &nu in &[0.0, 0.5, 1.0, 3.5, 7.0, 24.5, 49.0, 50.0, 63.0, 199.0] {
            for &x in &[1e-4, 0.1, 1.0, 5.0, 20.0, 80.0, 300.0] {
                let want = series(nu, x);
                let got = log_bessel_i(nu, x);
                assert!(
                    (got - want).abs() <= 1e-11 * want.abs().max(1.0),
                    "nu={nu} x={x}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn zero_argument() {
        assert_eq!(log_bessel_i(0.0, 0.0), 0.0);
        assert_eq!(log_bessel_i(1.5, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn ratio_matches_langevin_for_three_dimensions() {
        for &k in &[0.01f64, 0.5, 2.0, 32.0, 1e5] {
            let langevin = if k < 0.1 {
                k / 3.0 - k.powi(3) / 45.0 + 2.0 * k.powi(5) / 945.0
            } else {
                1.0 / k.tanh() - 1.0 / k
            };
            let got = bessel_i_ratio(0.5, k);
            // absolute error grows with ln I ~ k
            let tol = 1e-11 * langevin + 2e-16 * k;
            assert!((got - langevin).abs() < tol, "k={k}: {got} vs {langevin}");
        }
    }
}
