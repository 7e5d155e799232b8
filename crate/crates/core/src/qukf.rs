//! Per-particle quaternion unscented Kalman filter.
//!
//! The error state is 15-dimensional `[δr, δp, δv, δb_ω, δb_a]`; the moments
//! are augmented with the 6-dim non-additive IMU noise `[n_ω, n_a]` before
//! sigma-point generation, giving 2·21 + 1 = 43 points. Sigma points combine
//! `boxplus`/`boxminus` on the attitude block with plain arithmetic
//! elsewhere; the predicted attitude mean is the eigenvector-based weighted
//! quaternion mean.

use crate::geometry::{quat_weighted_mean, GeometryError};
use crate::kinematics::{propagate_exact, ImuSample, NavState, WorldParams, ERR_DIM};
use crate::linalg::{robust_cholesky, symmetrize_mut};
use crate::sensing::{correct_inputs, landmark_h, ImuNoiseParams};
use nalgebra::{DMatrix, DVector, Vector3, Vector6};

/// Augmented error dimension (15 state + 6 noise).
pub const AUG_DIM: usize = ERR_DIM + NOISE_DIM;
/// Non-additive noise dimension `[n_ω, n_a]`.
pub const NOISE_DIM: usize = 6;
/// Sigma point count `2·AUG_DIM + 1`.
pub const SIGMA_COUNT: usize = 2 * AUG_DIM + 1;

/// Mean and error-space covariance of one UKF.
#[derive(Debug, Clone)]
pub struct UkfMoments {
    pub mean: NavState,
    /// 15x15 covariance over `[δr, δp, δv, δb_ω, δb_a]`.
    pub cov: DMatrix<f64>,
}

/// Moments augmented with the zero-mean IMU noise block.
#[derive(Debug, Clone)]
pub struct AugmentedMoments {
    /// State part of the augmented mean; the noise mean is identically zero.
    pub mean: NavState,
    /// 21x21 block-diagonal covariance `diag(P, C_ω, C_a)`.
    pub cov: DMatrix<f64>,
}

/// Sigma-point scaling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfTuning {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for UkfTuning {
    /// Keeps every mean weight positive (`λ/(λ+21) > 0`), which the weighted
    /// quaternion mean appreciates.
    fn default() -> Self {
        UkfTuning {
            lambda: 1.0,
            alpha: 1.0,
            beta: 2.0,
        }
    }
}

impl UkfTuning {
    /// Mean and covariance weights for the 43-point set.
    pub fn weights(&self) -> (Vec<f64>, Vec<f64>) {
        let n = AUG_DIM as f64;
        let w0m = self.lambda / (self.lambda + n);
        let w0c = w0m + 1.0 - self.alpha * self.alpha + self.beta;
        let wj = 1.0 / (2.0 * (n + self.lambda));
        let mut wm = vec![wj; SIGMA_COUNT];
        let mut wc = vec![wj; SIGMA_COUNT];
        wm[0] = w0m;
        wc[0] = w0c;
        (wm, wc)
    }
}

/// One augmented sigma point: a navigation state plus its noise components.
#[derive(Debug, Clone)]
pub struct SigmaPoint {
    pub state: NavState,
    /// `[n_ω, n_a]` drawn from the augmented covariance columns.
    pub noise: Vector6<f64>,
}

/// The 43 sigma points with their mean/covariance weights.
#[derive(Debug, Clone)]
pub struct SigmaPointSet {
    pub points: Vec<SigmaPoint>,
    pub weights_m: Vec<f64>,
    pub weights_c: Vec<f64>,
}

/// Result of a measurement update.
#[derive(Debug, Clone)]
pub struct MeasurementUpdate {
    pub moments: UkfMoments,
    pub zhat: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
}

/// Extends the moments with the zero-mean IMU noise block:
/// `P^a = diag(P, C_ω, C_a)`.
pub fn augment(moments: &UkfMoments, noise: &ImuNoiseParams) -> AugmentedMoments {
    let mut cov = DMatrix::zeros(AUG_DIM, AUG_DIM);
    cov.view_mut((0, 0), (ERR_DIM, ERR_DIM)).copy_from(&moments.cov);
    for i in 0..3 {
        for j in 0..3 {
            cov[(ERR_DIM + i, ERR_DIM + j)] = noise.c_omega[(i, j)];
            cov[(ERR_DIM + 3 + i, ERR_DIM + 3 + j)] = noise.c_acc[(i, j)];
        }
    }
    AugmentedMoments {
        mean: moments.mean,
        cov,
    }
}

/// Generates the sigma points from the scaled lower Cholesky columns of the
/// augmented covariance: point 0 is the mean, points `j` / `j+21` retract
/// `±√(21+λ) L_j`.
pub fn sigma_points(
    aug: &AugmentedMoments,
    tuning: &UkfTuning,
) -> Result<SigmaPointSet, GeometryError> {
    let scale_sq = AUG_DIM as f64 + tuning.lambda;
    debug_assert!(scale_sq > 0.0, "sigma-point scaling must be positive");
    let factor = robust_cholesky(&aug.cov)?;
    let scale = scale_sq.sqrt();

    let mut points = Vec::with_capacity(SIGMA_COUNT);
    points.push(SigmaPoint {
        state: aug.mean,
        noise: Vector6::zeros(),
    });
    let mut minus = Vec::with_capacity(AUG_DIM);
    for j in 0..AUG_DIM {
        let delta: DVector<f64> = factor.lower().column(j) * scale;
        let ds = delta.as_slice();
        points.push(SigmaPoint {
            state: aug.mean.retract(&ds[..ERR_DIM]),
            noise: Vector6::from_row_slice(&ds[ERR_DIM..]),
        });
        let neg: Vec<f64> = ds.iter().map(|x| -x).collect();
        minus.push(SigmaPoint {
            state: aug.mean.retract(&neg[..ERR_DIM]),
            noise: Vector6::from_row_slice(&neg[ERR_DIM..]),
        });
    }
    points.extend(minus);

    let (weights_m, weights_c) = tuning.weights();
    Ok(SigmaPointSet {
        points,
        weights_m,
        weights_c,
    })
}

/// Propagates every sigma point through the state transition (IMU inversion
/// followed by the exact discrete step) and rebuilds the predicted moments.
/// The additive process noise `C_w = diag(0₉, C_bω, C_ba)` is added to the
/// covariance. Also returns the propagated points for the measurement stage.
pub fn time_update(
    sigma: &SigmaPointSet,
    u: &ImuSample,
    dt: f64,
    world: &WorldParams,
    noise: &ImuNoiseParams,
) -> Result<(UkfMoments, Vec<NavState>), GeometryError> {
    let propagated: Vec<NavState> = sigma
        .points
        .iter()
        .map(|pt| {
            let n_omega = Vector3::new(pt.noise[0], pt.noise[1], pt.noise[2]);
            let n_acc = Vector3::new(pt.noise[3], pt.noise[4], pt.noise[5]);
            let (omega, acc) = correct_inputs(
                u,
                (&pt.state.b_omega, &pt.state.b_acc),
                (&n_omega, &n_acc),
            );
            propagate_exact(&pt.state, &omega, &acc, world, dt)
        })
        .collect();

    let quats: Vec<_> = propagated.iter().map(|s| s.q).collect();
    let mean_q = quat_weighted_mean(&quats, &sigma.weights_m)?;
    let mut p = Vector3::zeros();
    let mut v = Vector3::zeros();
    let mut bw = Vector3::zeros();
    let mut ba = Vector3::zeros();
    for (s, w) in propagated.iter().zip(&sigma.weights_m) {
        p += s.p * *w;
        v += s.v * *w;
        bw += s.b_omega * *w;
        ba += s.b_acc * *w;
    }
    let mean = NavState {
        q: mean_q,
        p,
        v,
        b_omega: bw,
        b_acc: ba,
    };

    let mut cov = DMatrix::zeros(ERR_DIM, ERR_DIM);
    for (s, w) in propagated.iter().zip(&sigma.weights_c) {
        let d = s.boxminus(&mean);
        cov.ger(*w, &d, &d, 1.0);
    }
    for i in 0..3 {
        for j in 0..3 {
            cov[(9 + i, 9 + j)] += noise.c_bomega[(i, j)];
            cov[(12 + i, 12 + j)] += noise.c_bacc[(i, j)];
        }
    }
    symmetrize_mut(&mut cov);

    Ok((UkfMoments { mean, cov }, propagated))
}

/// Unscented measurement update against one landmark frame.
///
/// `K = P_xz P_zz⁻¹` is computed through a solve against the factorized
/// innovation covariance; the correction retracts onto the manifold
/// (`boxplus` on the attitude block).
pub fn measurement_update(
    pred: &UkfMoments,
    propagated: &[NavState],
    weights_m: &[f64],
    weights_c: &[f64],
    z: &DVector<f64>,
    f_w: &[Vector3<f64>],
    c_f: &DMatrix<f64>,
) -> Result<MeasurementUpdate, GeometryError> {
    let m_z = z.len();
    assert!(m_z > 0, "measurement update requires a non-empty frame");
    debug_assert_eq!(m_z, 3 * f_w.len());
    debug_assert_eq!(propagated.len(), weights_m.len());

    let z_points: Vec<DVector<f64>> = propagated.iter().map(|s| landmark_h(s, f_w)).collect();
    let mut zhat = DVector::zeros(m_z);
    for (zp, w) in z_points.iter().zip(weights_m) {
        zhat += zp * *w;
    }

    let mut p_zz = c_f.clone();
    let mut p_xz = DMatrix::zeros(ERR_DIM, m_z);
    for ((zp, s), w) in z_points.iter().zip(propagated).zip(weights_c) {
        let dz = zp - &zhat;
        let dx = s.boxminus(&pred.mean);
        p_zz.ger(*w, &dz, &dz, 1.0);
        p_xz.ger(*w, &dx, &dz, 1.0);
    }
    symmetrize_mut(&mut p_zz);

    let factor = robust_cholesky(&p_zz)?;
    let gain = factor.solve_right(&p_xz);

    let mut cov = &pred.cov - &gain * &p_zz * gain.transpose();
    symmetrize_mut(&mut cov);
    let correction = &gain * (z - &zhat);
    let mean = pred.mean.retract(correction.as_slice());

    Ok(MeasurementUpdate {
        moments: UkfMoments { mean, cov },
        zhat,
        innovation_cov: p_zz,
    })
}
