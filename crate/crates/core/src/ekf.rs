//! Error-state extended Kalman filter baseline.
//!
//! Shares the state, exact discrete propagation and landmark measurement
//! model with the particle filter; the error state is the same 15-dim
//! `[δr, δp, δv, δb_ω, δb_a]` with the attitude perturbation applied on the
//! world side (`q = q_r(δr) ⊗ q̂`), matching the manifold operators used by
//! the sigma points. Covariance updates use the Joseph form.

use crate::geometry::{skew, GeometryError};
use crate::kinematics::{propagate_exact, ImuSample, NavState, WorldParams, ERR_DIM};
use crate::linalg::{robust_cholesky, symmetrize_mut};
use crate::sensing::{landmark_h, ImuNoiseParams, LandmarkFrame, LandmarkNoise};
use nalgebra::{DMatrix, Matrix3, Vector3};

/// Right Jacobian of SO(3): `exp((θ+δ)∧) = exp(θ∧) exp((J_r(θ)δ)∧)`.
fn right_jacobian(theta: &Vector3<f64>) -> Matrix3<f64> {
    let t = theta.norm();
    let k = skew(theta);
    if t < 1e-6 {
        Matrix3::identity() - k * 0.5 + k * k * (1.0 / 6.0)
    } else {
        let t2 = t * t;
        Matrix3::identity() - k * ((1.0 - t.cos()) / t2) + k * k * ((t - t.sin()) / (t2 * t))
    }
}

/// Error-state EKF over mean and 15x15 covariance.
#[derive(Debug, Clone)]
pub struct Ekf {
    pub mean: NavState,
    pub cov: DMatrix<f64>,
}

impl Ekf {
    pub fn new(mean: NavState, cov: DMatrix<f64>) -> Self {
        assert_eq!(cov.nrows(), ERR_DIM);
        assert_eq!(cov.ncols(), ERR_DIM);
        Ekf { mean, cov }
    }

    /// First-order error-state transition Jacobian of the discrete step and
    /// the noise-input Jacobian, evaluated at the current mean.
    ///
    /// With the world-side attitude perturbation the attitude block is the
    /// identity; the bias and noise couplings pick up the new-attitude DCM
    /// and the right Jacobian of the rotation increment.
    pub fn jacobians(
        &self,
        u: &ImuSample,
        dt: f64,
        next_q_rotmat: &Matrix3<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let r_prev = self.mean.q.to_rotmat();
        let omega_hat = u.omega_m - self.mean.b_omega;
        let acc_hat = u.acc_m - self.mean.b_acc;
        let w_acc = skew(&(r_prev * acc_hat));
        let att_coupling = next_q_rotmat * right_jacobian(&(omega_hat * dt)) * dt;

        let mut f = DMatrix::<f64>::identity(ERR_DIM, ERR_DIM);
        let mut g = DMatrix::<f64>::zeros(ERR_DIM, 6);
        for i in 0..3 {
            for j in 0..3 {
                // δr ← δb_ω and n_ω
                f[(i, 9 + j)] = -att_coupling[(i, j)];
                g[(i, j)] = -att_coupling[(i, j)];
                // δp rows
                f[(3 + i, j)] = -0.5 * dt * dt * w_acc[(i, j)];
                f[(3 + i, 12 + j)] = -0.5 * dt * dt * r_prev[(i, j)];
                g[(3 + i, 3 + j)] = -0.5 * dt * dt * r_prev[(i, j)];
                // δv rows
                f[(6 + i, j)] = -dt * w_acc[(i, j)];
                f[(6 + i, 12 + j)] = -dt * r_prev[(i, j)];
                g[(6 + i, 3 + j)] = -dt * r_prev[(i, j)];
            }
            f[(3 + i, 6 + i)] = dt;
        }
        (f, g)
    }

    /// Propagates the mean through the exact discrete step with bias-corrected
    /// inputs and the covariance through the linearized error dynamics plus
    /// the additive bias random-walk noise.
    pub fn predict(&mut self, u: &ImuSample, dt: f64, noise: &ImuNoiseParams, world: &WorldParams) {
        let omega = u.omega_m - self.mean.b_omega;
        let acc = u.acc_m - self.mean.b_acc;
        let next = propagate_exact(&self.mean, &omega, &acc, world, dt);
        let (f, g) = self.jacobians(u, dt, &next.q.to_rotmat());

        let mut c_x = DMatrix::<f64>::zeros(6, 6);
        for i in 0..3 {
            for j in 0..3 {
                c_x[(i, j)] = noise.c_omega[(i, j)];
                c_x[(3 + i, 3 + j)] = noise.c_acc[(i, j)];
            }
        }
        let mut cov = &f * &self.cov * f.transpose() + &g * c_x * g.transpose();
        for i in 0..3 {
            for j in 0..3 {
                cov[(9 + i, 9 + j)] += noise.c_bomega[(i, j)];
                cov[(12 + i, 12 + j)] += noise.c_bacc[(i, j)];
            }
        }
        symmetrize_mut(&mut cov);
        self.mean = next;
        self.cov = cov;
    }

    /// Measurement Jacobian of the stacked landmark model at the mean:
    /// per landmark `∂h/∂δr = R̂ᵀ[f_w - p̂]_x` and `∂h/∂δp = -R̂ᵀ`.
    pub fn measurement_jacobian(&self, f_w: &[Vector3<f64>]) -> DMatrix<f64> {
        let rt = self.mean.q.to_rotmat().transpose();
        let mut h = DMatrix::<f64>::zeros(3 * f_w.len(), ERR_DIM);
        for (l, fw) in f_w.iter().enumerate() {
            let dr = rt * skew(&(fw - self.mean.p));
            for i in 0..3 {
                for j in 0..3 {
                    h[(3 * l + i, j)] = dr[(i, j)];
                    h[(3 * l + i, 3 + j)] = -rt[(i, j)];
                }
            }
        }
        h
    }

    /// Standard EKF update with the Joseph-form covariance; the mean
    /// correction retracts onto the manifold (`boxplus` on attitude).
    pub fn update(
        &mut self,
        frame: &LandmarkFrame,
        noise: &LandmarkNoise,
    ) -> Result<(), GeometryError> {
        let m_z = frame.measurement_dim();
        assert!(m_z > 0, "EKF update requires a non-empty landmark frame");
        let f_w = frame.world_points();
        let z = frame.stacked_measurement();
        let c_f = noise.covariance(m_z)?;

        let h = self.measurement_jacobian(&f_w);
        let mut s = &h * &self.cov * h.transpose() + &c_f;
        symmetrize_mut(&mut s);
        let factor = robust_cholesky(&s)?;
        let pht = &self.cov * h.transpose();
        let k = factor.solve_right(&pht);

        let innovation = z - landmark_h(&self.mean, &f_w);
        let correction = &k * innovation;
        self.mean = self.mean.retract(correction.as_slice());

        let ikh = DMatrix::<f64>::identity(ERR_DIM, ERR_DIM) - &k * &h;
        let mut cov = &ikh * &self.cov * ikh.transpose() + &k * &c_f * k.transpose();
        symmetrize_mut(&mut cov);
        self.cov = cov;
        Ok(())
    }

    /// Drives the EKF over the same streams and stepping scheme as the
    /// particle filter (`dt = 0` first step, frames matched within half a
    /// nominal sample time), so comparisons start from identical inputs.
    pub fn run(
        imu: &[ImuSample],
        frames: &[LandmarkFrame],
        init_mean: NavState,
        init_cov: DMatrix<f64>,
        imu_noise: &ImuNoiseParams,
        landmark_noise: &LandmarkNoise,
        world: &WorldParams,
    ) -> Result<Vec<(f64, NavState)>, GeometryError> {
        let mut ekf = Ekf::new(init_mean, init_cov);
        let mut out = Vec::with_capacity(imu.len());
        let half_window = 0.5 * world.dt;
        let mut fi = 0;
        for k in 0..imu.len() {
            let t_k = imu[k].t;
            let (u, dt) = if k == 0 {
                (&imu[0], 0.0)
            } else {
                (&imu[k - 1], imu[k].t - imu[k - 1].t)
            };
            ekf.predict(u, dt, imu_noise, world);
            while fi < frames.len() && frames[fi].t <= t_k + half_window {
                let frame = &frames[fi];
                fi += 1;
                if frame.landmarks.is_empty() {
                    continue;
                }
                ekf.update(frame, landmark_noise)?;
            }
            out.push((t_k, ekf.mean));
        }
        Ok(out)
    }
}
