//! Geometry of the unit hypersphere S^{K-1}.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-9;
const ORTHO_TOL: f64 = 1e-8;

/// A point on the unit sphere in `K >= 2` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Scales `v` onto the sphere.
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "unit vectors need dimension >= 2, got {}",
                v.len()
            )));
        }
        let n = norm(&v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateInput(format!(
                "cannot scale vector of norm {n} onto the sphere"
            )));
        }
        Ok(UnitVector(v.into_iter().map(|x| x / n).collect()))
    }

    /// Accepts `v` only if it already has unit norm.
    pub fn from_normalized(v: Vec<f64>) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "unit vectors need dimension >= 2, got {}",
                v.len()
            )));
        }
        let n = norm(&v);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidParameter(format!("vector norm {n} is not 1")));
        }
        Ok(UnitVector(v))
    }

    /// The `i`-th standard basis vector.
    pub fn basis(dim: usize, i: usize) -> Result<Self> {
        if i >= dim {
            return Err(Error::InvalidParameter(format!("basis index {i} >= dimension {dim}")));
        }
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Self::from_normalized(v)
    }

    /// Uniformly distributed point on S^{dim-1}.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "unit vectors need dimension >= 2, got {dim}"
            )));
        }
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if norm(&v) > 0.0 {
                return Self::new(v);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &UnitVector) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn negated(&self) -> UnitVector {
        UnitVector(self.0.iter().map(|x| -x).collect())
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::from_normalized(v)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(u: UnitVector) -> Self {
        u.0
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A unit vector written as a weighted sum of mutually orthogonal unit
/// components, `v = sum_i weights[i] * components[i]` with `|weights[i]| <= 1`.
#[derive(Debug, Clone)]
pub struct OrthoDecomposition {
    components: Vec<UnitVector>,
    weights: Vec<f64>,
}

impl OrthoDecomposition {
    pub fn new(components: Vec<UnitVector>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput("decomposition has no components".into()));
        }
        if components.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                actual: weights.len(),
            });
        }
        let dim = components[0].dim();
        for c in &components {
            check_dims(dim, c.dim())?;
        }
        for (i, a) in components.iter().enumerate() {
            for (j, b) in components.iter().enumerate().skip(i + 1) {
                let d = dot(a.as_slice(), b.as_slice());
                if d.abs() > ORTHO_TOL {
                    return Err(Error::NonOrthogonal { i, j, dot: d.abs() });
                }
            }
        }
        if let Some(w) = weights.iter().find(|w| !(w.abs() <= 1.0)) {
            return Err(Error::InvalidParameter(format!("weight {w} outside [-1, 1]")));
        }
        Ok(Self { components, weights })
    }

    /// Splits `v` into its restrictions to disjoint coordinate blocks.
    ///
    /// Each block restriction is orthogonal to the others; the weight of a
    /// block is the norm of `v` on it. Blocks where `v` vanishes are skipped.
    pub fn from_blocks(v: &UnitVector, blocks: &[std::ops::Range<usize>]) -> Result<Self> {
        let mut components = Vec::new();
        let mut weights = Vec::new();
        let mut covered = 0;
        for b in blocks {
            if b.end > v.dim() || b.start >= b.end {
                return Err(Error::InvalidParameter(format!(
                    "block {b:?} invalid for dimension {}",
                    v.dim()
                )));
            }
            covered += b.len();
            let mut part = vec![0.0; v.dim()];
            part[b.clone()].copy_from_slice(&v.as_slice()[b.clone()]);
            let n = norm(&part);
            if n > 0.0 {
                weights.push(n);
                components.push(UnitVector::new(part)?);
            }
        }
        if covered != v.dim() {
            return Err(Error::InvalidParameter(format!(
                "blocks cover {covered} of {} coordinates",
                v.dim()
            )));
        }
        Self::new(components, weights)
    }

    pub fn components(&self) -> &[UnitVector] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `sum_i weights[i] * components[i]`.
    pub fn recompose(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.components[0].dim()];
        for (c, w) in self.components.iter().zip(&self.weights) {
            axpy(*w, c.as_slice(), &mut out);
        }
        out
    }
}

/// Rescales `v` to have Euclidean norm exactly `clip_norm`.
pub fn normalize(v: &[f64], clip_norm: f64) -> Result<Vec<f64>> {
    if !(clip_norm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "clip norm must be positive, got {clip_norm}"
        )));
    }
    let n = norm(v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateInput(format!("cannot rescale vector of norm {n}")));
    }
    let s = clip_norm / n;
    Ok(v.iter().map(|x| x * s).collect())
}

/// Like [`normalize`] onto the unit sphere, but maps an exactly-zero vector to
/// a uniformly random direction. The flag reports whether that happened.
pub fn normalize_or_random<R: Rng + ?Sized>(v: &[f64], rng: &mut R) -> Result<(UnitVector, bool)> {
    if v.iter().all(|&x| x == 0.0) {
        return Ok((UnitVector::random(v.len(), rng)?, true));
    }
    Ok((UnitVector::new(v.to_vec())?, false))
}

/// Angular distance `arccos(a . b)` in `[0, pi]`.
pub fn angular_distance(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    Ok(a.dot(b)?.clamp(-1.0, 1.0).acos())
}

/// Chord (Euclidean) distance `||a - b||` in `[0, 2]`.
pub fn euclidean_distance(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    let plain = v.iter().map(|x| x * x).sum::<f64>();
    if plain.is_finite() && plain > 1e-280 {
        return plain.sqrt();
    }
    // rescaled to avoid overflow/underflow
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * v.iter().map(|x| (x / m) * (x / m)).sum::<f64>().sqrt()
}

pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

    fn unit(v: &[f64]) -> UnitVector {
        UnitVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let v = normalize(&[3.0, 4.0], 1.0).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(normalize(&[1.0, 0.0, 0.0], 1.0).unwrap(), vec![1.0, 0.0, 0.0]);
        let v = normalize(&[1.0, 1.0], 1.0).unwrap();
        assert!((v[0] - FRAC_1_SQRT_2).abs() < 1e-15 && (v[1] - FRAC_1_SQRT_2).abs() < 1e-15);
        let v = normalize(&[3.0, 4.0], 2.5).unwrap();
        assert!((norm(&v) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn normalize_rejects_zero() {
        assert!(matches!(normalize(&[0.0, 0.0], 1.0), Err(Error::DegenerateInput(_))));
        assert!(matches!(UnitVector::new(vec![0.0; 4]), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn zero_vector_maps_to_random_direction() {
        let mut r = rng::stream(3);
        let (u, replaced) = normalize_or_random(&[0.0; 5], &mut r).unwrap();
        assert!(replaced);
        assert!((norm(u.as_slice()) - 1.0).abs() < 1e-12);
        let (u, replaced) = normalize_or_random(&[0.0, 2.0], &mut r).unwrap();
        assert!(!replaced);
        assert_eq!(u.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn distance_examples() {
        let a = unit(&[1.0, 0.0, 0.0]);
        let b = unit(&[0.0, 1.0, 0.0]);
        assert_eq!(angular_distance(&a, &a).unwrap(), 0.0);
        assert!((angular_distance(&a, &b).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((angular_distance(&a, &a.negated()).unwrap() - PI).abs() < 1e-15);
        assert_eq!(euclidean_distance(&a, &a).unwrap(), 0.0);
        assert!((euclidean_distance(&a, &a.negated()).unwrap() - 2.0).abs() < 1e-15);
        assert!((euclidean_distance(&a, &b).unwrap() - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn near_identical_vectors_do_not_produce_nan() {
        let a = unit(&[1.0, 1e-9, 0.0]);
        let b = unit(&[1.0, 1e-9 + 1e-17, 0.0]);
        assert!(angular_distance(&a, &b).unwrap().is_finite());
    }

    #[test]
    fn dimension_mismatch_errors() {
        let a = unit(&[1.0, 0.0]);
        let b = unit(&[1.0, 0.0, 0.0]);
        assert!(matches!(angular_distance(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            euclidean_distance(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn orthogonality_is_validated() {
        let e1 = UnitVector::basis(3, 0).unwrap();
        let e2 = UnitVector::basis(3, 1).unwrap();
        let d = unit(&[1.0, 1.0, 0.0]);
        assert!(OrthoDecomposition::new(vec![e1.clone(), e2.clone()], vec![0.6, 0.8]).is_ok());
        assert!(matches!(
            OrthoDecomposition::new(vec![e1.clone(), d], vec![0.5, 0.5]),
            Err(Error::NonOrthogonal { .. })
        ));
        assert!(OrthoDecomposition::new(vec![e1, e2], vec![1.5, 0.0]).is_err());
    }

    #[test]
    fn block_decomposition_recomposes() {
        let v = unit(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let d = OrthoDecomposition::from_blocks(&v, &[0..2, 2..5]).unwrap();
        assert_eq!(d.len(), 2);
        let back = d.recompose();
        for (x, y) in back.iter().zip(v.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn pair(dim: usize) -> impl Strategy<Value = (UnitVector, UnitVector)> {
        (
            proptest::collection::vec(-1.0f64..1.0, dim),
            proptest::collection::vec(-1.0f64..1.0, dim),
        )
            .prop_filter("nonzero", |(a, b)| norm(a) > 1e-6 && norm(b) > 1e-6)
            .prop_map(|(a, b)| (UnitVector::new(a).unwrap(), UnitVector::new(b).unwrap()))
    }

    fn any_pair() -> impl Strategy<Value = (UnitVector, UnitVector)> {
        prop_oneof![pair(2), pair(3), pair(16), pair(128)]
    }

    proptest! {
        #[test]
        fn chord_bounded_by_arc((a, b) in any_pair()) {
            let d2 = euclidean_distance(&a, &b).unwrap();
            let dt = angular_distance(&a, &b).unwrap();
            prop_assert!(d2 <= dt + 1e-12);
        }

        #[test]
        fn chord_identity((a, b) in any_pair()) {
            let d2 = euclidean_distance(&a, &b).unwrap();
            let dt = angular_distance(&a, &b).unwrap();
            prop_assert!((d2 - 2.0 * (dt / 2.0).sin()).abs() < 1e-9);
        }

        #[test]
        fn angular_symmetric_and_triangle((a, b) in pair(8), c in proptest::collection::vec(-1.0f64..1.0, 8)) {
            prop_assume!(norm(&c) > 1e-6);
            let c = UnitVector::new(c).unwrap();
            let ab = angular_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, angular_distance(&b, &a).unwrap());
            let ac = angular_distance(&a, &c).unwrap();
            let cb = angular_distance(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }

        #[test]
        fn normalize_idempotent(v in proptest::collection::vec(-10.0f64..10.0, 2..40)) {
            prop_assume!(norm(&v) > 1e-6);
            let once = normalize(&v, 1.0).unwrap();
            let twice = normalize(&once, 1.0).unwrap();
            prop_assert!((norm(&once) - 1.0).abs() < 1e-12);
            for (x, y) in once.iter().zip(&twice) {
                prop_assert!((x - y).abs() < 1e-15);
            }
            prop_assert!(dot(&once, &v) / norm(&v) >= 1.0 - 1e-12);
        }
    }
}
