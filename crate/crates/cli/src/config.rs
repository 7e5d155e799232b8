//! TOML schemas for the simulator spec and the filter configuration.
//!
//! Unknown keys are hard errors everywhere, so a typo in a tuning name fails
//! the run instead of silently using a default.

use anyhow::{bail, Context, Result};
use quatnav::nalgebra::{DMatrix, Vector3};
use quatnav::geometry::RotationVector;
use quatnav::kinematics::{NavState, WorldParams, ERR_DIM};
use quatnav::qukf::UkfTuning;
use quatnav::qupf::{FilterConfig, ProposalMode};
use quatnav::sensing::{ImuNoiseParams, LandmarkNoise};
use quatnav::simkit::{Motion, TrajectorySpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuNoiseToml {
    pub sigma_omega: f64,
    pub sigma_acc: f64,
    pub sigma_bomega: f64,
    pub sigma_bacc: f64,
}

impl Default for ImuNoiseToml {
    fn default() -> Self {
        ImuNoiseToml {
            sigma_omega: 0.02,
            sigma_acc: 0.1,
            sigma_bomega: 1e-5,
            sigma_bacc: 1e-4,
        }
    }
}

impl ImuNoiseToml {
    pub fn to_params(&self) -> ImuNoiseParams {
        ImuNoiseParams::isotropic(
            self.sigma_omega,
            self.sigma_acc,
            self.sigma_bomega,
            self.sigma_bacc,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkNoiseToml {
    pub sigma_f: f64,
}

impl Default for LandmarkNoiseToml {
    fn default() -> Self {
        LandmarkNoiseToml { sigma_f: 0.02 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldToml {
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    /// Nominal IMU sample time; inferred from the data when omitted.
    pub dt: Option<f64>,
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

impl Default for WorldToml {
    fn default() -> Self {
        WorldToml {
            gravity: default_gravity(),
            dt: None,
        }
    }
}

/// Simulator specification file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpecToml {
    pub duration: f64,
    #[serde(default = "default_imu_rate")]
    pub imu_rate: u32,
    #[serde(default = "default_cam_rate")]
    pub cam_rate: u32,
    pub motion: String,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_angular_amplitude")]
    pub angular_amplitude: f64,
    #[serde(default = "default_landmark_count")]
    pub landmark_count: usize,
    #[serde(default = "default_box_min")]
    pub landmark_box_min: [f64; 3],
    #[serde(default = "default_box_max")]
    pub landmark_box_max: [f64; 3],
    #[serde(default)]
    pub imu_noise: ImuNoiseToml,
    #[serde(default)]
    pub landmark_noise: LandmarkNoiseToml,
    #[serde(default)]
    pub world: WorldToml,
}

fn default_imu_rate() -> u32 {
    200
}
fn default_cam_rate() -> u32 {
    20
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_angular_amplitude() -> f64 {
    0.3
}
fn default_landmark_count() -> usize {
    20
}
fn default_box_min() -> [f64; 3] {
    [-4.0, -4.0, -1.0]
}
fn default_box_max() -> [f64; 3] {
    [4.0, 4.0, 3.0]
}

impl SimSpecToml {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading sim spec {}", path.display()))?;
        let spec: SimSpecToml =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(spec)
    }

    pub fn trajectory(&self) -> Result<TrajectorySpec> {
        let motion = match self.motion.as_str() {
            "figure-eight" => Motion::FigureEight,
            "circle" => Motion::Circle,
            "hover-then-dash" => Motion::HoverThenDash,
            other => bail!(
                "unknown motion `{other}` (expected figure-eight, circle or hover-then-dash)"
            ),
        };
        if self.cam_rate == 0 || self.imu_rate == 0 || self.imu_rate % self.cam_rate != 0 {
            bail!("imu_rate must be a positive integer multiple of cam_rate");
        }
        Ok(TrajectorySpec {
            duration: self.duration,
            imu_rate: self.imu_rate,
            cam_rate: self.cam_rate,
            motion,
            amplitude: self.amplitude,
            angular_amplitude: self.angular_amplitude,
            landmark_count: self.landmark_count,
            landmark_box: (vec3(self.landmark_box_min), vec3(self.landmark_box_max)),
        })
    }

    pub fn world(&self) -> WorldParams {
        WorldParams {
            gravity: vec3(self.world.gravity),
            dt: self.world.dt.unwrap_or(1.0 / self.imu_rate as f64),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesToml {
    #[serde(default = "default_particle_count")]
    pub count: usize,
    /// Defaults to `count / 2`.
    pub ess_threshold: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_proposal")]
    pub proposal: String,
}

fn default_particle_count() -> usize {
    50
}
fn default_epsilon() -> f64 {
    1e-12
}
fn default_proposal() -> String {
    "standard-upf".into()
}

impl Default for ParticlesToml {
    fn default() -> Self {
        ParticlesToml {
            count: default_particle_count(),
            ess_threshold: None,
            epsilon: default_epsilon(),
            proposal: default_proposal(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningToml {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    2.0
}

impl Default for TuningToml {
    fn default() -> Self {
        TuningToml {
            lambda: default_lambda(),
            alpha: default_alpha(),
            beta: default_beta(),
        }
    }
}

/// Initial state: either offsets applied to the first ground-truth record or
/// an explicit state.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitToml {
    #[serde(default)]
    pub from_truth: bool,
    pub rot_offset: Option<[f64; 3]>,
    pub pos_offset: Option<[f64; 3]>,
    pub vel_offset: Option<[f64; 3]>,
    pub q: Option<[f64; 4]>,
    pub p: Option<[f64; 3]>,
    pub v: Option<[f64; 3]>,
    pub b_omega: Option<[f64; 3]>,
    pub b_acc: Option<[f64; 3]>,
}

/// Per-block initial standard deviations (diagonal covariance).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitCovToml {
    #[serde(default = "default_rot_std")]
    pub rot_std: f64,
    #[serde(default = "default_pos_std")]
    pub pos_std: f64,
    #[serde(default = "default_vel_std")]
    pub vel_std: f64,
    #[serde(default = "default_bw_std")]
    pub bias_omega_std: f64,
    #[serde(default = "default_ba_std")]
    pub bias_acc_std: f64,
}

fn default_rot_std() -> f64 {
    0.3
}
fn default_pos_std() -> f64 {
    0.6
}
fn default_vel_std() -> f64 {
    0.1
}
fn default_bw_std() -> f64 {
    1e-3
}
fn default_ba_std() -> f64 {
    1e-2
}

impl Default for InitCovToml {
    fn default() -> Self {
        InitCovToml {
            rot_std: default_rot_std(),
            pos_std: default_pos_std(),
            vel_std: default_vel_std(),
            bias_omega_std: default_bw_std(),
            bias_acc_std: default_ba_std(),
        }
    }
}

impl InitCovToml {
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut cov = DMatrix::zeros(ERR_DIM, ERR_DIM);
        let stds = [
            self.rot_std,
            self.pos_std,
            self.vel_std,
            self.bias_omega_std,
            self.bias_acc_std,
        ];
        for (b, s) in stds.iter().enumerate() {
            for i in 0..3 {
                cov[(3 * b + i, 3 * b + i)] = s * s;
            }
        }
        cov
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportToml {
    #[serde(default = "default_convergence_threshold")]
    pub convergence_threshold: f64,
}

fn default_convergence_threshold() -> f64 {
    0.1
}

impl Default for ReportToml {
    fn default() -> Self {
        ReportToml {
            convergence_threshold: default_convergence_threshold(),
        }
    }
}

/// Filter configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfigToml {
    /// Used by `compare`; `run --filter` takes precedence.
    pub filter: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub particles: ParticlesToml,
    #[serde(default)]
    pub tuning: TuningToml,
    #[serde(default)]
    pub imu_noise: ImuNoiseToml,
    #[serde(default)]
    pub landmark_noise: LandmarkNoiseToml,
    #[serde(default)]
    pub world: WorldToml,
    #[serde(default)]
    pub init: InitToml,
    #[serde(default)]
    pub init_cov: InitCovToml,
    #[serde(default)]
    pub report: ReportToml,
}

impl FilterConfigToml {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading filter config {}", path.display()))?;
        let cfg: FilterConfigToml =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    /// Resolves the initial state against the (optional) ground truth.
    pub fn init_state(&self, truth: Option<&NavState>) -> Result<NavState> {
        let mut state = if self.init.from_truth {
            *truth.ok_or_else(|| {
                anyhow::anyhow!("init.from_truth requires a dataset with groundtruth.csv")
            })?
        } else {
            let mut s = NavState::identity();
            if let Some(q) = self.init.q {
                s.q = quatnav::geometry::Quaternion::new(q[0], q[1], q[2], q[3]);
            }
            if let Some(p) = self.init.p {
                s.p = vec3(p);
            }
            if let Some(v) = self.init.v {
                s.v = vec3(v);
            }
            s
        };
        if let Some(bw) = self.init.b_omega {
            state.b_omega = vec3(bw);
        }
        if let Some(ba) = self.init.b_acc {
            state.b_acc = vec3(ba);
        }
        if let Some(r) = self.init.rot_offset {
            state.q = state.q.boxplus(&RotationVector(vec3(r)));
        }
        if let Some(p) = self.init.pos_offset {
            state.p += vec3(p);
        }
        if let Some(v) = self.init.vel_offset {
            state.v += vec3(v);
        }
        Ok(state)
    }

    pub fn proposal_mode(&self) -> Result<ProposalMode> {
        match self.particles.proposal.as_str() {
            "standard-upf" => Ok(ProposalMode::StandardUpf),
            "paper-literal" => Ok(ProposalMode::PaperLiteral),
            other => bail!("unknown proposal mode `{other}`"),
        }
    }

    /// Builds the core filter configuration. `data_dt` is the sample time
    /// inferred from the dataset, used when `world.dt` is not set.
    pub fn filter_config(&self, init_mean: NavState, data_dt: f64) -> Result<FilterConfig> {
        let world = WorldParams {
            gravity: vec3(self.world.gravity),
            dt: self.world.dt.unwrap_or(data_dt),
        };
        Ok(FilterConfig {
            particle_count: self.particles.count,
            ess_threshold: self
                .particles
                .ess_threshold
                .unwrap_or(self.particles.count as f64 / 2.0),
            epsilon: self.particles.epsilon,
            tuning: UkfTuning {
                lambda: self.tuning.lambda,
                alpha: self.tuning.alpha,
                beta: self.tuning.beta,
            },
            imu_noise: self.imu_noise.to_params(),
            landmark_noise: LandmarkNoise::Isotropic {
                sigma_f: self.landmark_noise.sigma_f,
            },
            world,
            init_mean,
            init_cov: self.init_cov.matrix(),
            proposal_mode: self.proposal_mode()?,
            seed: self.seed,
        })
    }
}
