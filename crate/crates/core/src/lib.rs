//! Quaternion-based unscented particle filtering for visual-inertial navigation.
//!
//! The crate fuses 6-axis IMU samples with matched world/body landmark pairs to
//! estimate attitude, position, linear velocity and IMU biases of a vehicle
//! moving with six degrees of freedom. The main estimator keeps one quaternion
//! unscented Kalman filter per particle and combines them through importance
//! weighting with ESS-gated systematic resampling. An error-state EKF over the
//! same kinematics is provided as a comparison baseline, together with a
//! synthetic trajectory simulator, CSV dataset ingestion and error metrics.
//!
//! Module map:
//!
//! - [`geometry`]: quaternion / rotation-vector / rotation-matrix algebra,
//!   manifold `boxplus`/`boxminus` operators, eigenvector-based quaternion
//!   weighted mean, Gaussian log-density.
//! - [`kinematics`]: continuous 6-DoF navigation kinematics and the exact
//!   zero-order-hold discretization used as the state transition.
//! - [`sensing`]: IMU bias/noise measurement model and the stacked landmark
//!   measurement function.
//! - [`qukf`]: the per-particle quaternion UKF (augmentation, manifold sigma
//!   points, time and measurement updates).
//! - [`qupf`]: the particle layer (initialization, proposal sampling,
//!   importance weights, resampling, weighted estimates, stream driver).
//! - [`ekf`]: error-state EKF baseline over the same state and measurements.
//! - [`simkit`]: synthetic data generation, dataset IO and error metrics.
//!
//! All randomness flows from explicit 64-bit seeds through counter-derived
//! substreams, so every run is reproducible bit for bit regardless of the
//! parallelism degree (see the `parallel` feature).

pub use nalgebra;

pub mod ekf;
pub mod geometry;
pub mod kinematics;
pub mod linalg;
pub mod qukf;
pub mod qupf;
pub mod rng;
pub mod sensing;
pub mod simkit;

pub use ekf::Ekf;
pub use geometry::{Quaternion, RotationVector};
pub use kinematics::{ImuSample, NavState, WorldParams};
pub use qupf::{Estimate, FilterConfig, ProposalMode, Qupf};
pub use sensing::{ImuNoiseParams, Landmark, LandmarkFrame, LandmarkNoise};

/// Configures the global worker pool used by the particle layer.
///
/// `n == 0` leaves the default (one worker per hardware thread). Calling this
/// more than once, or after the pool has been used, returns an error from the
/// underlying pool builder. Without the `parallel` feature this is a no-op.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> Result<(), Box<dyn std::error::Error>> {
    if n == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.into())
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> Result<(), Box<dyn std::error::Error>> {
    Ok(())
}
