//! Continuous 6-DoF navigation kinematics and its exact discretization.
//!
//! The continuous model is `q̇ = ½Γ(ω)q`, `ṗ = v`, `v̇ = g + R_q(q)a` with the
//! gyro/accelerometer biases modelled as random walks (no deterministic
//! drift). Discretization is the zero-order-hold exact solution with the
//! generator frozen at the start of the step, which is what the filters use
//! as their state transition.

use crate::geometry::{Quaternion, RotationVector};
use nalgebra::{DVector, Matrix4, Vector3, Vector4};

/// Error-space dimension: `[δr, δp, δv, δb_ω, δb_a]`, three each.
pub const ERR_DIM: usize = 15;

pub const ERR_ROT: usize = 0;
pub const ERR_POS: usize = 3;
pub const ERR_VEL: usize = 6;
pub const ERR_BW: usize = 9;
pub const ERR_BA: usize = 12;

/// Full navigation state on S³ × R¹²: attitude, position, velocity and the
/// two IMU biases. The flattened dimension is 16, the error space 15.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    /// Body-to-world attitude.
    pub q: Quaternion,
    /// Position in the world frame (m).
    pub p: Vector3<f64>,
    /// Linear velocity in the world frame (m/s).
    pub v: Vector3<f64>,
    /// Gyroscope bias (rad/s).
    pub b_omega: Vector3<f64>,
    /// Accelerometer bias (m/s²).
    pub b_acc: Vector3<f64>,
}

impl NavState {
    pub fn identity() -> Self {
        NavState {
            q: Quaternion::IDENTITY,
            p: Vector3::zeros(),
            v: Vector3::zeros(),
            b_omega: Vector3::zeros(),
            b_acc: Vector3::zeros(),
        }
    }

    /// Manifold retraction: applies a 15-dim error vector, `boxplus` on the
    /// attitude block and plain addition elsewhere.
    pub fn retract(&self, d: &[f64]) -> NavState {
        debug_assert_eq!(d.len(), ERR_DIM);
        let dr = RotationVector(Vector3::new(d[0], d[1], d[2]));
        NavState {
            q: self.q.boxplus(&dr),
            p: self.p + Vector3::new(d[3], d[4], d[5]),
            v: self.v + Vector3::new(d[6], d[7], d[8]),
            b_omega: self.b_omega + Vector3::new(d[9], d[10], d[11]),
            b_acc: self.b_acc + Vector3::new(d[12], d[13], d[14]),
        }
    }

    /// Manifold difference `self ⊖ reference`: quaternion `boxminus` on the
    /// attitude block, plain subtraction elsewhere.
    pub fn boxminus(&self, reference: &NavState) -> DVector<f64> {
        let mut d = DVector::zeros(ERR_DIM);
        let dr = self.q.boxminus(&reference.q);
        d.fixed_rows_mut::<3>(ERR_ROT).copy_from(&dr.0);
        d.fixed_rows_mut::<3>(ERR_POS)
            .copy_from(&(self.p - reference.p));
        d.fixed_rows_mut::<3>(ERR_VEL)
            .copy_from(&(self.v - reference.v));
        d.fixed_rows_mut::<3>(ERR_BW)
            .copy_from(&(self.b_omega - reference.b_omega));
        d.fixed_rows_mut::<3>(ERR_BA)
            .copy_from(&(self.b_acc - reference.b_acc));
        d
    }

    /// Global chart `x^q2r`: replaces the quaternion by its rotation vector,
    /// giving the 15-dim coordinates used for particle draws and densities.
    pub fn to_error_coords(&self) -> DVector<f64> {
        let mut d = DVector::zeros(ERR_DIM);
        d.fixed_rows_mut::<3>(ERR_ROT).copy_from(&self.q.to_rotvec().0);
        d.fixed_rows_mut::<3>(ERR_POS).copy_from(&self.p);
        d.fixed_rows_mut::<3>(ERR_VEL).copy_from(&self.v);
        d.fixed_rows_mut::<3>(ERR_BW).copy_from(&self.b_omega);
        d.fixed_rows_mut::<3>(ERR_BA).copy_from(&self.b_acc);
        d
    }

    /// Inverse chart `x^r2q`.
    pub fn from_error_coords(d: &DVector<f64>) -> NavState {
        debug_assert_eq!(d.len(), ERR_DIM);
        NavState {
            q: RotationVector(d.fixed_rows::<3>(ERR_ROT).into_owned()).to_quat(),
            p: d.fixed_rows::<3>(ERR_POS).into_owned(),
            v: d.fixed_rows::<3>(ERR_VEL).into_owned(),
            b_omega: d.fixed_rows::<3>(ERR_BW).into_owned(),
            b_acc: d.fixed_rows::<3>(ERR_BA).into_owned(),
        }
    }
}

/// Timestamped gyro/accelerometer measurement (the filter input `u`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Measured angular velocity, body frame (rad/s).
    pub omega_m: Vector3<f64>,
    /// Measured linear acceleration, body frame (m/s²).
    pub acc_m: Vector3<f64>,
}

/// Gravity vector and nominal sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldParams {
    /// World-frame gravitational acceleration (m/s²), z-up by default.
    pub gravity: Vector3<f64>,
    /// Nominal sample time (s); per-sample timestamps take precedence.
    pub dt: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            gravity: Vector3::new(0.0, 0.0, -9.81),
            dt: 0.005,
        }
    }
}

/// `Γ(ω)` of the quaternion kinematics `q̇ = ½Γ(ω)q`.
pub fn gamma(omega: &Vector3<f64>) -> Matrix4<f64> {
    let (x, y, z) = (omega.x, omega.y, omega.z);
    Matrix4::new(
        0.0, -x, -y, -z, //
        x, 0.0, z, -y, //
        y, -z, 0.0, x, //
        z, y, -x, 0.0,
    )
}

/// Continuous-time derivatives `(q̇, ṗ, v̇)`; bias derivatives are zero.
pub fn continuous_derivative(
    state: &NavState,
    omega: &Vector3<f64>,
    acc: &Vector3<f64>,
    world: &WorldParams,
) -> (Vector4<f64>, Vector3<f64>, Vector3<f64>) {
    let q_dot = gamma(omega) * state.q.as_vector4() * 0.5;
    let p_dot = state.v;
    let v_dot = world.gravity + state.q.to_rotmat() * acc;
    (q_dot, p_dot, v_dot)
}

/// Closed-form `exp(½Γ(ω)dT) q`: rotates the attitude by the body rate held
/// constant over the step. Falls back to a two-term expansion for tiny
/// angles; the result is renormalized.
pub fn attitude_transition(q: &Quaternion, omega: &Vector3<f64>, dt: f64) -> Quaternion {
    let qv = q.as_vector4();
    let angle = omega.norm() * dt;
    let next = if angle < 1e-8 {
        qv + gamma(omega) * qv * (0.5 * dt)
    } else {
        let half = 0.5 * angle;
        qv * half.cos() + gamma(omega) * qv * (half.sin() / omega.norm())
    };
    Quaternion::new(next[0], next[1], next[2], next[3])
}

/// Zero-order-hold exact step of the navigation kinematics with the
/// generator frozen at the start state: `c = g + R_q(q)a` stays constant, so
/// `v += dT c` and `p += dT v + dT²/2 c`. Biases are copied unchanged.
pub fn propagate_exact(
    state: &NavState,
    omega: &Vector3<f64>,
    acc: &Vector3<f64>,
    world: &WorldParams,
    dt: f64,
) -> NavState {
    let c = world.gravity + state.q.to_rotmat() * acc;
    NavState {
        q: attitude_transition(&state.q, omega, dt),
        p: state.p + state.v * dt + c * (0.5 * dt * dt),
        v: state.v + c * dt,
        b_omega: state.b_omega,
        b_acc: state.b_acc,
    }
}

/// Pure IMU integration from `init`, subtracting the state's own (constant)
/// bias estimates. Emits one `(t, state)` pair per IMU sample; sample `k-1`
/// is held constant over `[t_{k-1}, t_k]`.
pub fn dead_reckon(
    imu: &[ImuSample],
    init: &NavState,
    world: &WorldParams,
) -> Vec<(f64, NavState)> {
    let mut out = Vec::with_capacity(imu.len());
    if imu.is_empty() {
        return out;
    }
    let mut state = *init;
    out.push((imu[0].t, state));
    for k in 1..imu.len() {
        let dt = imu[k].t - imu[k - 1].t;
        let u = &imu[k - 1];
        let omega = u.omega_m - state.b_omega;
        let acc = u.acc_m - state.b_acc;
        state = propagate_exact(&state, &omega, &acc, world, dt);
        out.push((imu[k].t, state));
    }
    out
}
