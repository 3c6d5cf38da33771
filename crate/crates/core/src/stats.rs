//! Small statistics used by the attacks and the calibration trend checks.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Median of a non-empty sample (mean of the middle pair for even sizes).
/// NaNs sort last.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// Ranks starting at 1, ties receive their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// A constant input yields 0.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    pearson(&ranks(x), &ranks(y))
}

/// Direction of a one-sided trend test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Increasing,
    Decreasing,
}

/// Outcome of a Spearman trend test.
#[derive(Debug, Clone, Copy)]
pub struct TrendTest {
    pub rho: f64,
    /// One-sided p-value in the requested direction.
    pub p_value: f64,
}

impl TrendTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// One-sided Spearman trend test. Exact permutation distribution for
/// `n <= 9`, Student-t approximation beyond.
pub fn spearman_trend(x: &[f64], y: &[f64], dir: Trend) -> TrendTest {
    let rho = spearman(x, y);
    let n = x.len();
    let sign = match dir {
        Trend::Increasing => 1.0,
        Trend::Decreasing => -1.0,
    };
    let p_value = if n < 3 {
        1.0
    } else if n <= 9 {
        let rx = ranks(x);
        let ry = ranks(y);
        let observed = sign * rho;
        let mut perm = ry.clone();
        let mut hits = 0u64;
        let mut total = 0u64;
        permute(&mut perm, 0, &mut |p| {
            total += 1;
            if sign * pearson(&rx, p) >= observed - 1e-12 {
                hits += 1;
            }
        });
        hits as f64 / total as f64
    } else {
        let r = (sign * rho).clamp(-0.999_999_999, 0.999_999_999);
        let t = r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, n as f64 - 2.0).expect("valid t distribution");
        1.0 - dist.cdf(t)
    };
    TrendTest { rho, p_value }
}

fn permute(v: &mut Vec<f64>, k: usize, f: &mut impl FnMut(&[f64])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

/// Area under the ROC curve for scores where larger means "positive":
/// the probability a random positive outscores a random negative, ties ½.
pub fn auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut all: Vec<f64> = positives.iter().chain(negatives).copied().collect();
    let r = ranks(&all);
    all.clear();
    let np = positives.len() as f64;
    let nn = negatives.len() as f64;
    let rank_sum: f64 = r[..positives.len()].iter().sum();
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Maximum of `TPR - FPR` over all thresholds of the rule "score >= t is positive".
pub fn max_tpr_minus_fpr(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = positives.iter().chain(negatives).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut best = 0.0f64;
    for &t in &thresholds {
        best = best.max(tpr_minus_fpr(positives, negatives, t));
    }
    best
}

/// `TPR - FPR` of the rule "score >= threshold is positive".
pub fn tpr_minus_fpr(positives: &[f64], negatives: &[f64], threshold: f64) -> f64 {
    let tpr = positives.iter().filter(|&&s| s >= threshold).count() as f64 / positives.len() as f64;
    let fpr = negatives.iter().filter(|&&s| s >= threshold).count() as f64 / negatives.len() as f64;
    tpr - fpr
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(p: &[f64], n: &[f64]) -> f64 {
        let mut s = 0.0;
        for a in p {
            for b in n {
                s += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (p.len() * n.len()) as f64
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn spearman_perfect() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &[1.0, 4.0, 9.0, 16.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&x, &[1.0; 4]), 0.0);
    }

    #[test]
    fn exact_trend_p_value() {
        // A perfect monotone sequence of 5 has one-sided p = 1/120.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let t = spearman_trend(&x, &[5.0, 4.0, 3.0, 2.0, 1.0], Trend::Decreasing);
        assert!((t.p_value - 1.0 / 120.0).abs() < 1e-12);
        let t = spearman_trend(&x, &[5.0, 4.0, 3.0, 2.0, 1.0], Trend::Increasing);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_sample_trend_uses_t_approximation() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| v + if *v as i32 % 2 == 0 { 3.0 } else { 0.0 })
            .collect();
        let t = spearman_trend(&x, &y, Trend::Increasing);
        assert!(t.rho > 0.9 && t.p_value < 1e-6);
    }

    #[test]
    fn auc_separated_scores() {
        assert_eq!(auc(&[0.9, 0.8], &[0.7, 0.1]), 1.0);
        assert_eq!(max_tpr_minus_fpr(&[0.9, 0.8], &[0.7, 0.1]), 1.0);
        assert_eq!(auc(&[0.1], &[0.9]), 0.0);
        assert_eq!(auc(&[0.5, 0.5], &[0.5, 0.5]), 0.5);
        assert_eq!(max_tpr_minus_fpr(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_count(
            p in proptest::collection::vec(0u8..6, 1..25),
            n in proptest::collection::vec(0u8..6, 1..25),
        ) {
            let p: Vec<f64> = p.into_iter().map(f64::from).collect();
            let n: Vec<f64> = n.into_iter().map(f64::from).collect();
            prop_assert!((auc(&p, &n) - brute_auc(&p, &n)).abs() < 1e-12);
            let l = max_tpr_minus_fpr(&p, &n);
            prop_assert!((0.0..=1.0).contains(&l));
        }
    }
}
