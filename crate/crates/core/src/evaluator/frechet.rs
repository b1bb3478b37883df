use nalgebra::{DMatrix, RealField, SymmetricEigen};
use num_traits::Float;

use super::EvalError;
use crate::scalar::Real;

/// Diagonal loading applied to both covariances.
pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Eigenvalues below `-CLAMP_TOLERANCE * max(1, max |eigenvalue|)` are an error;
/// smaller negatives are rounding noise and clamp to zero.
const CLAMP_TOLERANCE: f64 = 1e-6;

/// Samples (`n x d`, row-major) with their mean and sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T> {
    n: usize,
    d: usize,
    data: Vec<T>,
    mean: Vec<T>,
    cov: Vec<T>,
}

impl<T: Real> EmbeddingSet<T> {
    pub fn new(n: usize, d: usize, data: Vec<T>) -> Result<Self, EvalError> {
        if n < 2 {
            return Err(EvalError::TooFewSamples(n));
        }
        if d == 0 || data.len() != n * d {
            return Err(EvalError::ShapeMismatch {
                n,
                d,
                len: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(EvalError::NonFiniteInput);
        }
        if n < 10 * d {
            log::warn!("embedding set has n={n} < 10*d={}; covariance estimate is unreliable", 10 * d);
        }

        // two passes: mean, then centered cross products
        let nf = T::from_count(n);
        let mut mean = vec![T::zero(); d];
        for row in data.chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += *v;
            }
        }
        for m in &mut mean {
            *m /= nf;
        }
        let mut cov = vec![T::zero(); d * d];
        let mut centered = vec![T::zero(); d];
        for row in data.chunks_exact(d) {
            for ((c, v), m) in centered.iter_mut().zip(row).zip(&mean) {
                *c = *v - *m;
            }
            for i in 0..d {
                let ci = centered[i];
                for j in i..d {
                    cov[i * d + j] += ci * centered[j];
                }
            }
        }
        let denom = T::from_count(n - 1);
        for i in 0..d {
            for j in i..d {
                let v = cov[i * d + j] / denom;
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
        Ok(Self {
            n,
            d,
            data,
            mean,
            cov,
        })
    }

    /// Builds a set from row vectors of equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, EvalError> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(EvalError::DimensionMismatch(d, bad.len()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    /// Row-major `d x d` covariance (denominator `n - 1`).
    pub fn covariance(&self) -> &[T] {
        &self.cov
    }
}

fn clamp_tolerance<T: Real>(values: impl Iterator<Item = T>) -> T {
    let scale = values.fold(T::one(), |acc, v| Float::max(acc, Float::abs(v)));
    T::lit(CLAMP_TOLERANCE) * scale
}

fn checked_clamp<T: Real>(values: &[T], tol: T) -> Result<Vec<T>, EvalError> {
    values
        .iter()
        .map(|&v| {
            if v < -tol {
                Err(EvalError::IndefiniteProduct(v.as_f64()))
            } else {
                Ok(Float::max(v, T::zero()))
            }
        })
        .collect()
}

/// Fréchet distance between Gaussian fits of two embedding sets:
/// `|mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2))` with `S := S + eps*I`.
///
/// The trace of the product square root is taken from the eigenvalues of the
/// symmetric matrix `Sa^(1/2) Sb Sa^(1/2)`, which shares its spectrum with
/// `Sa Sb`.
pub fn frechet_distance<T: Real + RealField>(
    a: &EmbeddingSet<T>,
    b: &EmbeddingSet<T>,
    epsilon: T,
) -> Result<T, EvalError> {
    if a.d != b.d {
        return Err(EvalError::DimensionMismatch(a.d, b.d));
    }
    if !Float::is_finite(epsilon) || epsilon < T::zero() {
        return Err(EvalError::NonFiniteInput);
    }
    let d = a.d;
    let regularized = |s: &EmbeddingSet<T>| {
        let mut m = DMatrix::from_row_slice(d, d, &s.cov);
        for i in 0..d {
            m[(i, i)] += epsilon;
        }
        m
    };
    let sa = regularized(a);
    let sb = regularized(b);

    let mean_term: T = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum();
    let trace_a: T = (0..d).map(|i| sa[(i, i)]).sum();
    let trace_b: T = (0..d).map(|i| sb[(i, i)]).sum();

    let eig_a = SymmetricEigen::new(sa);
    let ev_a: Vec<T> = eig_a.eigenvalues.iter().copied().collect();
    let roots = checked_clamp(&ev_a, clamp_tolerance(ev_a.iter().copied()))?;
    let roots = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        d,
        roots.into_iter().map(Float::sqrt),
    ));
    let sqrt_a = &eig_a.eigenvectors * roots * eig_a.eigenvectors.transpose();

    let inner = &sqrt_a * &sb * &sqrt_a;
    let inner = (&inner + inner.transpose()) * T::half();
    let ev: Vec<T> = SymmetricEigen::new(inner).eigenvalues.iter().copied().collect();
    let ev = checked_clamp(&ev, clamp_tolerance(ev.iter().copied()))?;
    let trace_sqrt: T = ev.into_iter().map(Float::sqrt).sum();

    let total = mean_term + trace_a + trace_b - T::two() * trace_sqrt;
    if !Float::is_finite(total) {
        return Err(EvalError::NonFiniteInput);
    }
    Ok(Float::max(total, T::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(rows: &[&[f64]]) -> EmbeddingSet<f64> {
        EmbeddingSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn statistics_are_sample_statistics() {
        let s = set(&[&[-1.0, 2.0], &[0.0, 4.0], &[1.0, 6.0]]);
        assert_eq!(s.mean(), &[0.0, 4.0]);
        assert_eq!(s.covariance(), &[1.0, 2.0, 2.0, 4.0]);
    }

    #[test]
    fn one_dimensional_closed_form() {
        let a = set(&[&[-1.0], &[0.0], &[1.0]]);
        let b = set(&[&[0.0], &[1.0], &[2.0]]);
        let fd = frechet_distance(&a, &b, DEFAULT_EPSILON).unwrap();
        assert!((fd - 1.0).abs() < 1e-9, "{fd}");
        assert!(frechet_distance(&a, &a, DEFAULT_EPSILON).unwrap() <= 1e-8);
    }

    #[test]
    fn diagonal_closed_form() {
        // sign-balanced samples: both covariances come out diagonal
        let a = set(&[&[-1.0, -2.0], &[1.0, 2.0], &[-1.0, 2.0], &[1.0, -2.0]]);
        let b = set(&[&[-2.0, -2.5], &[4.0, -1.5], &[-2.0, -1.5], &[4.0, -2.5]]);
        let (va, vb) = (a.covariance(), b.covariance());
        assert_eq!(va[1], 0.0);
        assert_eq!(vb[1], 0.0);
        for eps in [0.0, DEFAULT_EPSILON] {
            let expected: f64 = (0..2)
                .map(|i| {
                    let dm = a.mean()[i] - b.mean()[i];
                    let ds = (va[i * 3] + eps).sqrt() - (vb[i * 3] + eps).sqrt();
                    dm * dm + ds * ds
                })
                .sum();
            let fd = frechet_distance(&a, &b, eps).unwrap();
            assert!((fd - expected).abs() < 1e-9, "eps={eps}: {fd} vs {expected}");
        }
    }

    #[test]
    fn errors() {
        let a = set(&[&[0.0], &[1.0]]);
        let b = set(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(frechet_distance(&a, &b, 1e-6), Err(EvalError::DimensionMismatch(1, 2)));
        assert_eq!(EmbeddingSet::<f64>::new(1, 1, vec![0.0]), Err(EvalError::TooFewSamples(1)));
        assert_eq!(
            EmbeddingSet::new(2, 1, vec![0.0, f64::NAN]),
            Err(EvalError::NonFiniteInput)
        );
        assert!(matches!(
            EmbeddingSet::new(2, 2, vec![0.0; 3]),
            Err(EvalError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn works_in_f32() {
        let a = EmbeddingSet::<f32>::new(3, 1, vec![-1.0, 0.0, 1.0]).unwrap();
        let b = EmbeddingSet::<f32>::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let fd = frechet_distance(&a, &b, 1e-6).unwrap();
        assert!((fd - 1.0).abs() < 1e-4);
    }

    fn random_rows(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|j| rng.random_range(-1.0..1.0) * (1.0 + j as f64)).collect())
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn symmetric_zero_on_self_and_rotation_invariant(seed in any::<u64>(), theta in 0.0f64..std::f64::consts::TAU) {
            let ra = random_rows(seed, 40, 3);
            let rb: Vec<Vec<f64>> = random_rows(seed ^ 1, 50, 3).into_iter().map(|r| vec![r[0] + 0.5, r[1] * 0.7, r[2] - 1.0]).collect();
            let a = EmbeddingSet::from_rows(&ra).unwrap();
            let b = EmbeddingSet::from_rows(&rb).unwrap();
            let ab = frechet_distance(&a, &b, DEFAULT_EPSILON).unwrap();
            let ba = frechet_distance(&b, &a, DEFAULT_EPSILON).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9 * (1.0 + ab));
            prop_assert!(frechet_distance(&a, &a, DEFAULT_EPSILON).unwrap() < 1e-8);

            let (s, c) = theta.sin_cos();
            let rot = |r: &Vec<f64>| vec![c * r[0] - s * r[1], s * r[0] + c * r[1], r[2]];
            let a2 = EmbeddingSet::from_rows(&ra.iter().map(rot).collect::<Vec<_>>()).unwrap();
            let b2 = EmbeddingSet::from_rows(&rb.iter().map(rot).collect::<Vec<_>>()).unwrap();
            let rotated = frechet_distance(&a2, &b2, DEFAULT_EPSILON).unwrap();
            prop_assert!((rotated - ab).abs() < 1e-6);
        }
    }
}
