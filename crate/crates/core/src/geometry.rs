//! Quaternion, rotation-vector and rotation-matrix algebra.
//!
//! Quaternions are stored `[w, x, y, z]` and kept unit norm. Every operation
//! that returns a quaternion canonicalizes its sign so that `w >= 0` (tie:
//! first nonzero component positive), which makes the double cover invisible
//! to callers and gives `to_rotvec` its shortest-rotation guarantee.
//!
//! Besides the classic conversions the module provides the manifold operators
//! used by the filters: `boxplus`/`boxminus` between quaternions and rotation
//! vectors, the eigenvector-based weighted quaternion mean, and a Gaussian
//! log-density evaluated through the shared robust Cholesky policy.

use crate::linalg::{robust_cholesky, LinalgError};
use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// 3x3 direction cosine matrix; orthonormal with determinant +1.
pub type RotationMatrix = Matrix3<f64>;

/// Construction paths accept at most this much unit-norm deviation before
/// renormalizing, so values already on the sphere round-trip bit for bit.
const UNIT_TOL: f64 = 1e-9;

/// Below this angle `to_rotvec` switches to the series for `alpha/sin(alpha)`.
const SMALL_ANGLE: f64 = 1e-4;

/// Above `pi - NEAR_PI` the rotation axis comes from the dominant column of
/// `(R + I)/2` and the angle from `asin`. The generic route computes
/// `alpha/sin(alpha)` with `alpha` from `acos`, whose rounding is amplified
/// by `1/sin²(alpha)` near pi, so the switch happens well before that.
const NEAR_PI: f64 = 1e-3;

const LN_2PI: f64 = 1.837877066409345483560659472811;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error("vex argument is not skew-symmetric (max deviation {deviation:.3e})")]
    NotSkewSymmetric { deviation: f64 },
    #[error("weighted quaternion mean is ambiguous (eigenvalue gap {gap:.3e})")]
    DegenerateMean { gap: f64 },
    #[error(transparent)]
    Numerical(#[from] LinalgError),
}

/// Skew-symmetric matrix `[x]_x` with `skew(x) * y = x × y`.
pub fn skew(x: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -x.z, x.y, x.z, 0.0, -x.x, -x.y, x.x, 0.0)
}

/// Inverse of [`skew`]; the argument must be skew-symmetric within 1e-9.
pub fn vex(m: &Matrix3<f64>) -> Result<Vector3<f64>, GeometryError> {
    let dev = (m + m.transpose()).abs().max();
    if dev > 1e-9 {
        return Err(GeometryError::NotSkewSymmetric { deviation: dev });
    }
    Ok(vex_unchecked(m))
}

fn vex_unchecked(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Anti-symmetric projection `(D - Dᵀ)/2`.
pub fn pa(d: &Matrix3<f64>) -> Matrix3<f64> {
    (d - d.transpose()) * 0.5
}

/// Unit quaternion `[w, v]` describing an orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub v: Vector3<f64>,
}

impl Quaternion {
    /// Identity rotation `[1, 0, 0, 0]`.
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        v: Vector3::new(0.0, 0.0, 0.0),
    };

    /// Builds a unit quaternion from `[w, x, y, z]` components, renormalizing
    /// only when the input deviates from unit norm by more than 1e-9.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = Quaternion {
            w,
            v: Vector3::new(x, y, z),
        };
        let n = q.norm();
        if (n - 1.0).abs() <= UNIT_TOL {
            q.canonicalized()
        } else {
            q.scaled(1.0 / n).canonicalized()
        }
    }

    pub fn from_parts(w: f64, v: Vector3<f64>) -> Self {
        Self::new(w, v.x, v.y, v.z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.v.norm_squared()).sqrt()
    }

    fn scaled(&self, s: f64) -> Self {
        Quaternion {
            w: self.w * s,
            v: self.v * s,
        }
    }

    /// Flips the sign so `w >= 0`; on `w == 0` the first nonzero vector
    /// component is made positive.
    pub fn canonicalized(&self) -> Self {
        let flip = if self.w < 0.0 {
            true
        } else if self.w > 0.0 {
            false
        } else {
            let mut f = false;
            for c in [self.v.x, self.v.y, self.v.z] {
                if c != 0.0 {
                    f = c < 0.0;
                    break;
                }
            }
            f
        };
        if flip {
            self.scaled(-1.0)
        } else {
            *self
        }
    }

    /// Conjugate `[w, -v]`, which is the inverse for unit quaternions.
    pub fn inverse(&self) -> Self {
        Quaternion {
            w: self.w,
            v: -self.v,
        }
        .canonicalized()
    }

    pub fn as_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.v.x, self.v.y, self.v.z)
    }

    /// Direction cosine matrix `(w² - ‖v‖²)I + 2vvᵀ + 2w[v]_x`.
    pub fn to_rotmat(&self) -> RotationMatrix {
        let w = self.w;
        let v = self.v;
        Matrix3::identity() * (w * w - v.norm_squared())
            + v * v.transpose() * 2.0
            + skew(&v) * (2.0 * w)
    }

    /// Rotation-vector (angle-axis) chart, always the shortest rotation with
    /// angle in `[0, pi]`.
    ///
    /// The angle and axis are read off the rotation matrix; the generic
    /// `vex(pa(R))/sin(alpha)` axis is replaced near `alpha = 0` by the series
    /// for `alpha/sin(alpha)` and near `alpha = pi` by the dominant column of
    /// `(R + I)/2`, where the generic form is singular.
    pub fn to_rotvec(&self) -> RotationVector {
        let q = self.canonicalized();
        let r = q.to_rotmat();
        let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let alpha = c.acos();
        let half_vex = vex_unchecked(&pa(&r)); // = sin(alpha) * axis
        if alpha < SMALL_ANGLE {
            let a2 = alpha * alpha;
            let scale = 1.0 + a2 / 6.0 + 7.0 * a2 * a2 / 360.0;
            RotationVector(half_vex * scale)
        } else if alpha > std::f64::consts::PI - NEAR_PI {
            // (R + I)/2 -> vvᵀ as alpha -> pi; the dominant column seeds the
            // axis and power iteration (contraction ~cos(alpha/2) per step)
            // removes the O(pi - alpha) contamination. The angle comes from
            // asin(‖vex(Pa(R))‖), which stays well conditioned here.
            let b = (r + Matrix3::identity()) * 0.5;
            let mut best = 0;
            for j in 1..3 {
                if b.column(j).norm_squared() > b.column(best).norm_squared() {
                    best = j;
                }
            }
            let mut axis = b.column(best).normalize();
            for _ in 0..3 {
                axis = (&b * axis).normalize();
            }
            if axis.dot(&q.v) < 0.0 {
                axis = -axis;
            }
            let residual = half_vex.norm().min(1.0).asin();
            RotationVector(axis * (std::f64::consts::PI - residual))
        } else {
            RotationVector(half_vex * (alpha / alpha.sin()))
        }
    }

    /// `q ⊕ r = q_r(r) ⊗ q`.
    pub fn boxplus(&self, r: &RotationVector) -> Quaternion {
        r.to_quat() * *self
    }

    /// `q ⊖ r = q_r(r)⁻¹ ⊗ q`.
    pub fn boxminus_rotvec(&self, r: &RotationVector) -> Quaternion {
        r.to_quat().inverse() * *self
    }

    /// `q1 ⊖ q2 = r_q(q1 ⊗ q2⁻¹)`.
    pub fn boxminus(&self, other: &Quaternion) -> RotationVector {
        (*self * other.inverse()).to_rotvec()
    }
}

impl std::ops::Mul for Quaternion {
    type Output = Quaternion;

    /// Hamilton product, renormalized and sign-canonicalized.
    fn mul(self, rhs: Quaternion) -> Quaternion {
        let w = self.w * rhs.w - self.v.dot(&rhs.v);
        let v = rhs.v * self.w + self.v * rhs.w + self.v.cross(&rhs.v);
        let q = Quaternion { w, v };
        q.scaled(1.0 / q.norm()).canonicalized()
    }
}

impl std::ops::Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        self.scaled(-1.0)
    }
}

/// Angle-axis product `alpha * v` in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationVector(pub Vector3<f64>);

impl RotationVector {
    pub fn zero() -> Self {
        RotationVector(Vector3::zeros())
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    /// `q_r(r) = [cos(alpha/2), sin(alpha/2) vᵀ]`.
    pub fn to_quat(&self) -> Quaternion {
        let alpha = self.angle();
        let half = 0.5 * alpha;
        let s = if alpha > 1e-8 {
            half.sin() / alpha
        } else {
            0.5 - alpha * alpha / 48.0
        };
        Quaternion::from_parts(half.cos(), self.0 * s)
    }

    /// Rodrigues formula `exp([r]_x)`.
    pub fn to_rotmat(&self) -> RotationMatrix {
        let alpha = self.angle();
        let (a, b) = if alpha > 1e-8 {
            (alpha.sin() / alpha, (1.0 - alpha.cos()) / (alpha * alpha))
        } else {
            let a2 = alpha * alpha;
            (1.0 - a2 / 6.0, 0.5 - a2 / 24.0)
        };
        let k = skew(&self.0);
        Matrix3::identity() + k * a + k * k * b
    }
}

impl From<Vector3<f64>> for RotationVector {
    fn from(v: Vector3<f64>) -> Self {
        RotationVector(v)
    }
}

/// Weighted quaternion mean: the unit eigenvector of `D = Σ s_i q_i q_iᵀ`
/// for the eigenvalue of largest magnitude.
///
/// Invariant to uniform positive weight scaling and to sign flips of any
/// input. Weights may be negative (UKF mean weights); if the two largest
/// eigenvalue magnitudes coincide within 1e-12 the mean is ambiguous and an
/// error carrying the spectral gap is returned.
pub fn quat_weighted_mean(
    quats: &[Quaternion],
    weights: &[f64],
) -> Result<Quaternion, GeometryError> {
    assert_eq!(quats.len(), weights.len());
    assert!(!quats.is_empty());
    let mut d = Matrix4::<f64>::zeros();
    for (q, s) in quats.iter().zip(weights) {
        let col = q.as_vector4();
        d += col * col.transpose() * *s;
    }
    let eig = nalgebra::SymmetricEigen::new(d);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
    });
    let gap = eig.eigenvalues[order[0]].abs() - eig.eigenvalues[order[1]].abs();
    if gap <= 1e-12 {
        return Err(GeometryError::DegenerateMean { gap });
    }
    let e = eig.eigenvectors.column(order[0]);
    Ok(Quaternion::new(e[0], e[1], e[2], e[3]))
}

/// `log N(a | mean, cov)` evaluated through the robust Cholesky policy.
pub fn gaussian_logpdf(
    a: &DVector<f64>,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<f64, GeometryError> {
    let n = a.len();
    debug_assert_eq!(mean.len(), n);
    debug_assert_eq!(cov.nrows(), n);
    let f = robust_cholesky(cov)?;
    let d = a - mean;
    let maha = d.dot(&f.solve_vec(&d));
    Ok(-0.5 * (maha + f.log_det() + n as f64 * LN_2PI))
}

/// Draws `mean + L xi` with `L` the robust Cholesky factor; an all-zero
/// covariance yields the mean exactly.
pub fn sample_gaussian<R: Rng>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>, GeometryError> {
    if cov.iter().all(|&c| c == 0.0) {
        return Ok(mean.clone());
    }
    let f = robust_cholesky(cov)?;
    let xi = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + f.lower() * xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    pub(crate) fn random_unit_quat<R: Rng>(rng: &mut R) -> Quaternion {
        loop {
            let q = Quaternion {
                w: rng.sample::<f64, _>(StandardNormal),
                v: Vector3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                ),
            };
            if q.norm() > 1e-3 {
                return q.scaled(1.0 / q.norm()).canonicalized();
            }
        }
    }

    fn random_rotvec<R: Rng>(rng: &mut R, max_norm: f64) -> RotationVector {
        loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if v.norm() <= 1.0 && v.norm() > 1e-12 {
                return RotationVector(v * max_norm);
            }
        }
    }

    #[test]
    fn skew_matches_displayed_form() {
        let m = skew(&Vector3::new(1.0, 2.0, 3.0));
        let expected = Matrix3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(m, expected);
    }

    #[test]
    fn vex_inverts_skew() {
        let x = Vector3::new(0.3, -0.1, 4.0);
        assert_eq!(vex(&skew(&x)).unwrap(), x);
    }

    #[test]
    fn vex_rejects_non_skew() {
        let err = vex(&Matrix3::identity()).unwrap_err();
        match err {
            GeometryError::NotSkewSymmetric { deviation } => {
                assert_abs_diff_eq!(deviation, 2.0)
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn pa_of_symmetric_is_zero() {
        assert_eq!(pa(&Matrix3::identity()), Matrix3::zeros());
    }

    #[test]
    fn product_identity_and_inverse() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        for _ in 0..100 {
            let q = random_unit_quat(&mut rng);
            let qi = q * Quaternion::IDENTITY;
            assert_relative_eq!(qi.as_vector4(), q.as_vector4(), epsilon = 1e-12);
            let e = q * q.inverse();
            assert_relative_eq!(
                e.as_vector4(),
                Quaternion::IDENTITY.as_vector4(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn two_quarter_yaws_make_half_yaw() {
        let yaw90 = Quaternion::new(FRAC_PI_4.cos(), 0.0, 0.0, FRAC_PI_4.sin());
        let composed = yaw90 * yaw90;
        // Oracle: compose rotation matrices and compare DCMs.
        let expected = yaw90.to_rotmat() * yaw90.to_rotmat();
        assert_relative_eq!(composed.to_rotmat(), expected, epsilon = 1e-12);
        assert_relative_eq!(
            composed.as_vector4(),
            Vector4::new(0.0, 0.0, 0.0, 1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn rotmat_of_identity_and_yaw() {
        assert_relative_eq!(
            Quaternion::IDENTITY.to_rotmat(),
            Matrix3::identity(),
            epsilon = 1e-15
        );
        let yaw90 = Quaternion::new(FRAC_PI_4.cos(), 0.0, 0.0, FRAC_PI_4.sin());
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(yaw90.to_rotmat(), expected, epsilon = 1e-12);
    }

    #[test]
    fn rotmat_orthogonal_for_random_quats() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let r = random_unit_quat(&mut rng).to_rotmat();
            assert!(((r.transpose() * r) - Matrix3::identity()).norm() <= 1e-12);
            assert!((r.determinant() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rotmat_ignores_quaternion_sign() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let q = random_unit_quat(&mut rng);
        assert_relative_eq!(q.to_rotmat(), (-q).to_rotmat(), epsilon = 1e-15);
    }

    #[test]
    fn rotvec_quat_basic_cases() {
        let q = RotationVector::zero().to_quat();
        assert_eq!(q.as_vector4(), Quaternion::IDENTITY.as_vector4());
        assert_relative_eq!(
            RotationVector::zero().to_rotmat(),
            Matrix3::identity(),
            epsilon = 1e-15
        );

        let q = RotationVector(Vector3::new(FRAC_PI_2, 0.0, 0.0)).to_quat();
        assert_relative_eq!(
            q.as_vector4(),
            Vector4::new(FRAC_PI_4.cos(), FRAC_PI_4.sin(), 0.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn rotvec_roundtrip_sweep() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let mut max_err: f64 = 0.0;
        for _ in 0..10_000 {
            let r = random_rotvec(&mut rng, 3.0);
            let back = r.to_quat().to_rotvec();
            if r.angle() < PI - 1e-6 {
                max_err = max_err.max((back.0 - r.0).norm());
            }
        }
        assert!(max_err <= 1e-9, "max round-trip error {max_err:.3e}");
    }

    #[test]
    fn rotvec_roundtrip_near_pi() {
        // Angles on both sides of the near-pi branch boundary.
        for eps in [1e-9_f64, 1e-7, 1e-6, 1e-5, 1e-4, 5e-4, 1e-3, 2e-3, 1e-2] {
            let r = RotationVector(Vector3::new(1.0, -2.0, 0.5).normalize() * (PI - eps));
            let back = r.to_quat().to_rotvec();
            assert!(
                (back.0 - r.0).norm() <= 1e-9,
                "eps {eps:.1e}: err {:.3e}",
                (back.0 - r.0).norm()
            );
        }
        // At pi the axis sign is a convention; compare rotations instead.
        let r = RotationVector(Vector3::new(0.0, 1.0, 0.0) * PI);
        let back = r.to_quat().to_rotvec();
        assert_relative_eq!(back.to_rotmat(), r.to_rotmat(), epsilon = 1e-9);
    }

    #[test]
    fn quat_roundtrip_through_rotvec() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        for _ in 0..1000 {
            let q = random_unit_quat(&mut rng);
            let back = q.to_rotvec().to_quat();
            assert_relative_eq!(back.as_vector4(), q.as_vector4(), epsilon = 1e-9);
        }
    }

    #[test]
    fn rotmat_routes_agree() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        for _ in 0..1000 {
            let r = random_rotvec(&mut rng, 3.0);
            assert_relative_eq!(r.to_rotmat(), r.to_quat().to_rotmat(), epsilon = 1e-10);
        }
    }

    #[test]
    fn product_homomorphism() {
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        for _ in 0..1000 {
            let q1 = random_unit_quat(&mut rng);
            let q2 = random_unit_quat(&mut rng);
            assert_relative_eq!(
                (q1 * q2).to_rotmat(),
                q1.to_rotmat() * q2.to_rotmat(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn boxplus_boxminus_basics() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let q = random_unit_quat(&mut rng);
        assert_abs_diff_eq!(q.boxminus(&q).0.norm(), 0.0, epsilon = 1e-12);

        let r = RotationVector(Vector3::new(0.0, 0.0, FRAC_PI_2));
        let sum = Quaternion::IDENTITY.boxplus(&r);
        assert_relative_eq!(
            sum.as_vector4(),
            Vector4::new(FRAC_PI_4.cos(), 0.0, 0.0, FRAC_PI_4.sin()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn boxplus_boxminus_roundtrips() {
        let mut rng = ChaCha12Rng::seed_from_u64(18);
        for _ in 0..10_000 {
            let q = random_unit_quat(&mut rng);
            let r = random_rotvec(&mut rng, FRAC_PI_2 * 0.999);
            let diff = q.boxplus(&r).boxminus(&q);
            assert!((diff.0 - r.0).norm() <= 1e-9);
            // boxminus_rotvec undoes boxplus up to global sign.
            let back = q.boxplus(&r).boxminus_rotvec(&r);
            assert!((back.as_vector4() - q.as_vector4()).norm() <= 1e-9);
            // boxplus(q2, q1 ⊖ q2) recovers q1.
            let q1 = random_unit_quat(&mut rng);
            let rec = q.boxplus(&q1.boxminus(&q));
            assert!((rec.as_vector4() - q1.as_vector4()).norm() <= 1e-9);
        }
    }

    #[test]
    fn weighted_mean_trivial_cases() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let q = random_unit_quat(&mut rng);
        let m = quat_weighted_mean(&[q, q, q], &[0.2, 0.5, 0.3]).unwrap();
        assert_relative_eq!(m.as_vector4(), q.as_vector4(), epsilon = 1e-10);

        let m = quat_weighted_mean(&[q, -q], &[0.5, 0.5]).unwrap();
        assert_relative_eq!(m.to_rotmat(), q.to_rotmat(), epsilon = 1e-10);
    }

    #[test]
    fn weighted_mean_small_angle_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        for _ in 0..50 {
            let rs: Vec<Vector3<f64>> = (0..8)
                .map(|_| random_rotvec(&mut rng, 0.01).0)
                .collect();
            let quats: Vec<Quaternion> = rs
                .iter()
                .map(|r| Quaternion::IDENTITY.boxplus(&RotationVector(*r)))
                .collect();
            let weights = vec![1.0 / 8.0; 8];
            let mean = quat_weighted_mean(&quats, &weights).unwrap();
            let avg: Vector3<f64> = rs.iter().sum::<Vector3<f64>>() / 8.0;
            let expected = Quaternion::IDENTITY.boxplus(&RotationVector(avg));
            assert!((mean.boxminus(&expected)).0.norm() <= 1e-4);
        }
    }

    #[test]
    fn weighted_mean_invariances() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..100 {
            let quats: Vec<Quaternion> = (0..5).map(|_| random_unit_quat(&mut rng)).collect();
            let weights: Vec<f64> = (0..5).map(|_| rng.gen_range(0.05..1.0)).collect();
            let base = quat_weighted_mean(&quats, &weights).unwrap();

            // Scaling perturbs D by one rounding per entry, so the
            // eigenvector agrees to a few ulps rather than bitwise.
            let scaled: Vec<f64> = weights.iter().map(|w| w * 7.25).collect();
            let m2 = quat_weighted_mean(&quats, &scaled).unwrap();
            assert!((base.as_vector4() - m2.as_vector4()).norm() <= 1e-13);

            let flipped: Vec<Quaternion> = quats
                .iter()
                .enumerate()
                .map(|(i, q)| if i % 2 == 0 { -*q } else { *q })
                .collect();
            let m3 = quat_weighted_mean(&flipped, &weights).unwrap();
            assert_eq!(base.as_vector4(), m3.as_vector4());
        }
    }

    #[test]
    fn weighted_mean_degenerate_errors() {
        let qa = Quaternion::IDENTITY;
        let qb = Quaternion::new(0.0, 1.0, 0.0, 0.0);
        let err = quat_weighted_mean(&[qa, qb], &[0.5, 0.5]).unwrap_err();
        match err {
            GeometryError::DegenerateMean { gap } => assert!(gap.abs() <= 1e-12),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn logpdf_standard_normal_values() {
        let a = DVector::zeros(1);
        let cov = DMatrix::identity(1, 1);
        let lp = gaussian_logpdf(&a, &a, &cov).unwrap();
        assert_abs_diff_eq!(lp, -0.9189385332046727, epsilon = 1e-12);

        let a = DVector::from_element(1, 1.0);
        let lp = gaussian_logpdf(&a, &DVector::zeros(1), &cov).unwrap();
        assert_abs_diff_eq!(lp, -1.4189385332046727, epsilon = 1e-12);
    }

    #[test]
    fn logpdf_matches_naive_formula() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        for n in [2usize, 6, 15] {
            for _ in 0..25 {
                let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                let cov = &a * a.transpose() + DMatrix::identity(n, n) * 0.3;
                let x = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
                let m = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
                let lp = gaussian_logpdf(&x, &m, &cov).unwrap();
                let d = &x - &m;
                let naive = (-0.5 * d.dot(&(cov.clone().try_inverse().unwrap() * &d))
                    - 0.5 * (n as f64 * LN_2PI)
                    - 0.5 * cov.determinant().ln())
                    as f64;
                assert_abs_diff_eq!(lp, naive, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn sample_gaussian_zero_cov_is_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let mean = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let s = sample_gaussian(&mean, &DMatrix::zeros(3, 3), &mut rng).unwrap();
        assert_eq!(s, mean);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn quat_strategy() -> impl Strategy<Value = Quaternion> {
            (
                -1.0f64..1.0,
                -1.0f64..1.0,
                -1.0f64..1.0,
                -1.0f64..1.0,
            )
                .prop_filter("non-degenerate", |(w, x, y, z)| {
                    (w * w + x * x + y * y + z * z) > 1e-2
                })
                .prop_map(|(w, x, y, z)| Quaternion::new(w, x, y, z))
        }

        proptest! {
            #[test]
            fn constructed_quats_are_unit_and_canonical(q in quat_strategy()) {
                prop_assert!((q.norm() - 1.0).abs() <= 1e-9);
                prop_assert!(q.w >= 0.0);
            }

            #[test]
            fn product_keeps_unit_norm(q1 in quat_strategy(), q2 in quat_strategy()) {
                prop_assert!(((q1 * q2).norm() - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn rotvec_is_canonical_range(q in quat_strategy()) {
                let r = q.to_rotvec();
                prop_assert!(r.angle() <= std::f64::consts::PI + 1e-12);
            }
        }
    }
}
