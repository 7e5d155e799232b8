//! IMU measurement model and the stacked landmark measurement function.
//!
//! The IMU model is `ω_m = ω + b_ω + n_ω`, `a_m = a + b_a + n_a` with both
//! biases following per-step random walks. Landmarks are matched pairs of
//! world/body coordinates related by `f_b = R_q(q)ᵀ(f_w - p) + n_f`; the
//! measurement vector stacks the body coordinates in frame order.

use crate::geometry::{sample_gaussian, GeometryError};
use crate::kinematics::{ImuSample, NavState};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;

/// Per-step IMU noise covariances: white measurement noise on both channels
/// plus the per-step bias random-walk covariances. All symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuNoiseParams {
    pub c_omega: Matrix3<f64>,
    pub c_acc: Matrix3<f64>,
    pub c_bomega: Matrix3<f64>,
    pub c_bacc: Matrix3<f64>,
}

impl ImuNoiseParams {
    /// Isotropic covariances from standard deviations.
    pub fn isotropic(sigma_omega: f64, sigma_acc: f64, sigma_bomega: f64, sigma_bacc: f64) -> Self {
        ImuNoiseParams {
            c_omega: Matrix3::identity() * sigma_omega * sigma_omega,
            c_acc: Matrix3::identity() * sigma_acc * sigma_acc,
            c_bomega: Matrix3::identity() * sigma_bomega * sigma_bomega,
            c_bacc: Matrix3::identity() * sigma_bacc * sigma_bacc,
        }
    }

    pub fn zero() -> Self {
        ImuNoiseParams {
            c_omega: Matrix3::zeros(),
            c_acc: Matrix3::zeros(),
            c_bomega: Matrix3::zeros(),
            c_bacc: Matrix3::zeros(),
        }
    }
}

/// One matched landmark: world coordinates and the observed body coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub id: u64,
    pub f_w: Vector3<f64>,
    pub f_b: Vector3<f64>,
}

/// All landmarks matched at one camera timestamp; the measurement dimension
/// is `3 * landmarks.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub t: f64,
    pub landmarks: Vec<Landmark>,
}

impl LandmarkFrame {
    pub fn measurement_dim(&self) -> usize {
        3 * self.landmarks.len()
    }

    /// Stacked body-frame observations `z` in list order.
    pub fn stacked_measurement(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.measurement_dim());
        for (i, lm) in self.landmarks.iter().enumerate() {
            z.fixed_rows_mut::<3>(3 * i).copy_from(&lm.f_b);
        }
        z
    }

    /// World coordinates in list order.
    pub fn world_points(&self) -> Vec<Vector3<f64>> {
        self.landmarks.iter().map(|l| l.f_w).collect()
    }
}

/// Landmark measurement noise: isotropic per-axis standard deviation or a
/// full covariance over one frame's stacked measurement.
#[derive(Debug, Clone, PartialEq)]
pub enum LandmarkNoise {
    Isotropic { sigma_f: f64 },
    Full(DMatrix<f64>),
}

impl LandmarkNoise {
    /// Covariance for a frame of dimension `m_z`; the full variant must match.
    pub fn covariance(&self, m_z: usize) -> Result<DMatrix<f64>, GeometryError> {
        match self {
            LandmarkNoise::Isotropic { sigma_f } => {
                Ok(DMatrix::identity(m_z, m_z) * (sigma_f * sigma_f))
            }
            LandmarkNoise::Full(c) => {
                if c.nrows() != m_z || c.ncols() != m_z {
                    Err(crate::linalg::LinalgError::DimensionMismatch {
                        expected: m_z,
                        actual: c.nrows(),
                    }
                    .into())
                } else {
                    Ok(c.clone())
                }
            }
        }
    }
}

/// Measurement function `h`: per landmark `f_b = R_q(q)ᵀ(f_w - p)`, stacked
/// in input order. An empty list yields an empty vector.
pub fn landmark_h(state: &NavState, f_w: &[Vector3<f64>]) -> DVector<f64> {
    let rt = state.q.to_rotmat().transpose();
    let mut z = DVector::zeros(3 * f_w.len());
    for (i, fw) in f_w.iter().enumerate() {
        z.fixed_rows_mut::<3>(3 * i).copy_from(&(rt * (fw - state.p)));
    }
    z
}

/// Forward IMU model used by the simulator: adds bias and white noise to the
/// true rates and advances the bias random walks one step.
pub fn imu_forward_model<R: Rng>(
    t: f64,
    true_omega: &Vector3<f64>,
    true_acc: &Vector3<f64>,
    bias: (Vector3<f64>, Vector3<f64>),
    noise: &ImuNoiseParams,
    rng: &mut R,
) -> Result<(ImuSample, (Vector3<f64>, Vector3<f64>)), GeometryError> {
    let draw3 = |cov: &Matrix3<f64>, rng: &mut R| -> Result<Vector3<f64>, GeometryError> {
        let s = sample_gaussian(
            &DVector::zeros(3),
            &DMatrix::from_fn(3, 3, |i, j| cov[(i, j)]),
            rng,
        )?;
        Ok(Vector3::new(s[0], s[1], s[2]))
    };
    let n_omega = draw3(&noise.c_omega, rng)?;
    let n_acc = draw3(&noise.c_acc, rng)?;
    let n_bomega = draw3(&noise.c_bomega, rng)?;
    let n_bacc = draw3(&noise.c_bacc, rng)?;
    let sample = ImuSample {
        t,
        omega_m: true_omega + bias.0 + n_omega,
        acc_m: true_acc + bias.1 + n_acc,
    };
    Ok((sample, (bias.0 + n_bomega, bias.1 + n_bacc)))
}

/// Inverts the IMU model for the state transition: subtracts the bias state
/// and the sigma-point noise components from the measured rates.
pub fn correct_inputs(
    u: &ImuSample,
    bias: (&Vector3<f64>, &Vector3<f64>),
    noise_part: (&Vector3<f64>, &Vector3<f64>),
) -> (Vector3<f64>, Vector3<f64>) {
    (
        u.omega_m - bias.0 - noise_part.0,
        u.acc_m - bias.1 - noise_part.1,
    )
}
