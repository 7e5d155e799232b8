//! Shared dense linear-algebra helpers for the filter covariances.
//!
//! Every covariance factorization in the crate goes through the same jitter
//! policy: symmetrize first, and if the Cholesky factorization fails add
//! `1e-9 * tr(P)/n` to the diagonal, doubling up to three times before giving
//! up. The failing pivot index is preserved for diagnostics.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative jitter added to the diagonal when a factorization fails.
pub const JITTER_SCALE: f64 = 1e-9;

/// Number of jitter doublings attempted before reporting failure.
pub const JITTER_RETRIES: usize = 3;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    /// The matrix is not positive definite even after the jitter retries.
    /// Carries the first failing pivot index of the last attempt.
    #[error("matrix not positive definite (failing pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    /// Shape mismatch between operands.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = P`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    lower: DMatrix<f64>,
}

impl CholFactor {
    /// Plain factorization without jitter. Fails with the pivot index of the
    /// first non-positive diagonal entry.
    pub fn new(mat: &DMatrix<f64>) -> Result<Self, LinalgError> {
        let n = mat.nrows();
        debug_assert_eq!(n, mat.ncols());
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = mat[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { pivot: j });
            }
            let dj = d.sqrt();
            l[(j, j)] = dj;
            for i in (j + 1)..n {
                let mut s = mat[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / dj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// `log det P = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    /// Solves `P x = b` by forward/backward substitution.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut x = b.clone();
        for i in 0..n {
            for k in 0..i {
                let v = x[k];
                x[i] -= self.lower[(i, k)] * v;
            }
            x[i] /= self.lower[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let v = x[k];
                x[i] -= self.lower[(k, i)] * v;
            }
            x[i] /= self.lower[(i, i)];
        }
        x
    }

    /// Solves `X P = B` for `X`, i.e. `X = B P⁻¹` (used for Kalman gains).
    pub fn solve_right(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        debug_assert_eq!(b.ncols(), n);
        let mut x = b.clone();
        // Xᵀ solves P Xᵀ = Bᵀ column by column; operate row-wise instead.
        for r in 0..x.nrows() {
            for i in 0..n {
                for k in 0..i {
                    let v = x[(r, k)];
                    x[(r, i)] -= self.lower[(i, k)] * v;
                }
                x[(r, i)] /= self.lower[(i, i)];
            }
            for i in (0..n).rev() {
                for k in (i + 1)..n {
                    let v = x[(r, k)];
                    x[(r, i)] -= self.lower[(k, i)] * v;
                }
                x[(r, i)] /= self.lower[(i, i)];
            }
        }
        x
    }
}

/// Returns `(P + Pᵀ)/2`.
pub fn symmetrize(mat: &DMatrix<f64>) -> DMatrix<f64> {
    (mat + mat.transpose()) * 0.5
}

/// Symmetrizes in place.
pub fn symmetrize_mut(mat: &mut DMatrix<f64>) {
    let s = symmetrize(mat);
    *mat = s;
}

/// Factorization with the shared jitter policy: symmetrize, then on failure
/// add `JITTER_SCALE * tr(P)/n` to the diagonal and retry with up to
/// `JITTER_RETRIES` doublings.
pub fn robust_cholesky(mat: &DMatrix<f64>) -> Result<CholFactor, LinalgError> {
    let n = mat.nrows();
    let sym = symmetrize(mat);
    let mut last = match CholFactor::new(&sym) {
        Ok(f) => return Ok(f),
        Err(e) => e,
    };
    let mut jitter = JITTER_SCALE * sym.trace() / n as f64;
    for _ in 0..=JITTER_RETRIES {
        let mut attempt = sym.clone();
        for i in 0..n {
            attempt[(i, i)] += jitter;
        }
        match CholFactor::new(&attempt) {
            Ok(f) => return Ok(f),
            Err(e) => last = e,
        }
        jitter *= 2.0;
    }
    Err(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn factor_and_solve_roundtrip() {
        let p = random_spd(8, 1);
        let f = robust_cholesky(&p).unwrap();
        assert_relative_eq!(f.lower() * f.lower().transpose(), p, epsilon = 1e-10);
        let b = DVector::from_fn(8, |i, _| i as f64 - 3.0);
        let x = f.solve_vec(&b);
        assert_relative_eq!(&p * &x, b, epsilon = 1e-9);
    }

    #[test]
    fn solve_right_matches_inverse() {
        let p = random_spd(5, 2);
        let f = robust_cholesky(&p).unwrap();
        let b = DMatrix::from_fn(3, 5, |i, j| (i * 5 + j) as f64 * 0.1 - 0.6);
        let x = f.solve_right(&b);
        let pinv = p.clone().try_inverse().unwrap();
        assert_relative_eq!(x, &b * pinv, epsilon = 1e-9);
    }

    #[test]
    fn log_det_matches_direct() {
        let p = random_spd(6, 3);
        let f = robust_cholesky(&p).unwrap();
        assert_relative_eq!(f.log_det(), p.determinant().ln(), epsilon = 1e-9);
    }

    #[test]
    fn jitter_rescues_singular_matrix() {
        // Rank-deficient but with positive trace: jitter makes it factorizable.
        let mut p = DMatrix::zeros(3, 3);
        p[(0, 0)] = 1.0;
        let f = robust_cholesky(&p).unwrap();
        assert!(f.lower()[(2, 2)] > 0.0);
    }

    #[test]
    fn reports_failing_pivot() {
        let mut p = DMatrix::identity(4, 4);
        p[(2, 2)] = -5.0; // trace still positive, but jitter is far too small
        let err = robust_cholesky(&p).unwrap_err();
        assert_eq!(err, LinalgError::NotPositiveDefinite { pivot: 2 });
    }
}
