//! Particle layer: one quaternion UKF per particle, importance weighting,
//! ESS-gated systematic resampling and the weighted state estimate.
//!
//! Between camera frames the particles follow their UKF predictions; when a
//! landmark frame arrives each UKF runs a measurement update, a new particle
//! is drawn from its proposal and the importance weights combine likelihood,
//! transition prior and proposal density. All densities are evaluated in the
//! log domain and rescaled by the ensemble maximum before exponentiation,
//! which leaves the normalized weights unchanged.
//!
//! With the `parallel` feature the per-particle work runs as a parallel map
//! with a fixed collection order; every reduction is sequential, so results
//! are bitwise identical for any worker count.

use crate::geometry::{
    gaussian_logpdf, quat_weighted_mean, sample_gaussian, GeometryError,
};
use crate::kinematics::{ImuSample, NavState, WorldParams, ERR_DIM};
use crate::qukf::{
    augment, measurement_update, sigma_points, time_update, UkfMoments, UkfTuning,
};
use crate::rng::{substream, Domain};
use crate::sensing::{ImuNoiseParams, LandmarkFrame, LandmarkNoise};
use nalgebra::{DMatrix, Vector3};
use rand::Rng;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Error)]
pub enum FilterError {
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error("particle {index}: {source}")]
    Particle {
        index: usize,
        source: GeometryError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("out-of-order timestamp in {stream} stream at record {index} (t = {t})")]
    OutOfOrder {
        stream: &'static str,
        index: usize,
        t: f64,
    },
}

/// Which mean the proposal distribution is centred on.
///
/// `StandardUpf` draws around the posterior mean, matching the proposal
/// density used in the importance weights. `PaperLiteral` draws around the
/// predicted mean while still evaluating the proposal density at the
/// posterior, reproducing the published text verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProposalMode {
    #[default]
    StandardUpf,
    PaperLiteral,
}

/// Every tunable of the particle filter.
#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Particle count `m_p`.
    pub particle_count: usize,
    /// ESS threshold `m_thr`; resample when ESS drops below it.
    pub ess_threshold: f64,
    /// Weight stabilizer added to the importance ratio and its denominator.
    pub epsilon: f64,
    pub tuning: UkfTuning,
    pub imu_noise: ImuNoiseParams,
    pub landmark_noise: LandmarkNoise,
    pub world: WorldParams,
    pub init_mean: NavState,
    /// 15x15 initial error-space covariance.
    pub init_cov: DMatrix<f64>,
    pub proposal_mode: ProposalMode,
    pub seed: u64,
}

impl FilterConfig {
    /// Defaults: 50 particles, threshold `m_p/2`, `ε = 1e-12`.
    pub fn new(init_mean: NavState, init_cov: DMatrix<f64>, seed: u64) -> Self {
        FilterConfig {
            particle_count: 50,
            ess_threshold: 25.0,
            epsilon: 1e-12,
            tuning: UkfTuning::default(),
            imu_noise: ImuNoiseParams::isotropic(0.02, 0.1, 1e-5, 1e-4),
            landmark_noise: LandmarkNoise::Isotropic { sigma_f: 0.02 },
            world: WorldParams::default(),
            init_mean,
            init_cov,
            proposal_mode: ProposalMode::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.particle_count == 0 {
            return Err(FilterError::InvalidConfig("particle_count must be > 0".into()));
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= self.particle_count as f64) {
            return Err(FilterError::InvalidConfig(format!(
                "ess_threshold must lie in (0, particle_count]; got {}",
                self.ess_threshold
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(FilterError::InvalidConfig("epsilon must be > 0".into()));
        }
        if self.init_cov.nrows() != ERR_DIM || self.init_cov.ncols() != ERR_DIM {
            return Err(FilterError::InvalidConfig(format!(
                "init_cov must be {ERR_DIM}x{ERR_DIM}"
            )));
        }
        if self.tuning.lambda + crate::qukf::AUG_DIM as f64 <= 0.0 {
            return Err(FilterError::InvalidConfig(
                "lambda + augmented dimension must be positive".into(),
            ));
        }
        if !(self.world.dt > 0.0) {
            return Err(FilterError::InvalidConfig("world.dt must be > 0".into()));
        }
        Ok(())
    }
}

/// One particle: its UKF moments, current sample and normalized weight.
#[derive(Debug, Clone)]
pub struct Particle {
    pub ukf: UkfMoments,
    pub sample: NavState,
    pub weight: f64,
    /// Propagated sigma points kept between predict and update.
    propagated: Option<Vec<NavState>>,
}

/// Filter output at one IMU step.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub t: f64,
    pub state: NavState,
    /// Effective sample size before any resampling at this step.
    pub ess: f64,
    pub resampled: bool,
}

/// The particle ensemble.
#[derive(Debug)]
pub struct Qupf {
    particles: Vec<Particle>,
    config: FilterConfig,
    weights_m: Vec<f64>,
    weights_c: Vec<f64>,
    step: u64,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(feature = "parallel")]
fn try_map_particles<R, F>(particles: &mut [Particle], f: F) -> Result<Vec<R>, FilterError>
where
    R: Send,
    F: Fn(usize, &mut Particle) -> Result<R, FilterError> + Sync,
{
    particles
        .par_iter_mut()
        .enumerate()
        .map(|(i, p)| f(i, p))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn try_map_particles<R, F>(particles: &mut [Particle], f: F) -> Result<Vec<R>, FilterError>
where
    R: Send,
    F: Fn(usize, &mut Particle) -> Result<R, FilterError> + Sync,
{
    particles
        .iter_mut()
        .enumerate()
        .map(|(i, p)| f(i, p))
        .collect()
}

impl Qupf {
    /// Draws the initial ensemble: samples come from the initial Gaussian in
    /// rotation-vector coordinates (particle `i` uses substream `i`), all
    /// weights start at `1/m_p`, and every UKF starts at its own sample with
    /// the shared initial covariance.
    pub fn new(config: FilterConfig) -> Result<Self, FilterError> {
        config.validate()?;
        let m_p = config.particle_count;
        let mean_coords = config.init_mean.to_error_coords();
        let mut particles = Vec::with_capacity(m_p);
        for i in 0..m_p {
            let mut rng = substream(config.seed, Domain::ParticleInit, 0, i as u64);
            let coords = sample_gaussian(&mean_coords, &config.init_cov, &mut rng)
                .map_err(|source| FilterError::Particle { index: i, source })?;
            let sample = NavState::from_error_coords(&coords);
            particles.push(Particle {
                ukf: UkfMoments {
                    mean: sample,
                    cov: config.init_cov.clone(),
                },
                sample,
                weight: 1.0 / m_p as f64,
                propagated: None,
            });
        }
        let (weights_m, weights_c) = config.tuning.weights();
        Ok(Qupf {
            particles,
            config,
            weights_m,
            weights_c,
            step: 0,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Effective sample size `1/Σw²` of the current weights.
    pub fn ess(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
    }

    /// UKF time update for every particle: augment, sigma points, propagate.
    /// The particle sample is set to the predicted mean (used as-is when no
    /// frame arrives this step); weights are untouched.
    pub fn predict_step(&mut self, u: &ImuSample, dt: f64) -> Result<(), FilterError> {
        self.step += 1;
        let cfg = &self.config;
        try_map_particles(&mut self.particles, |i, p| {
            let wrap = |source| FilterError::Particle { index: i, source };
            let aug = augment(&p.ukf, &cfg.imu_noise);
            let set = sigma_points(&aug, &cfg.tuning).map_err(wrap)?;
            let (pred, points) =
                time_update(&set, u, dt, &cfg.world, &cfg.imu_noise).map_err(wrap)?;
            p.sample = pred.mean;
            p.ukf = pred;
            p.propagated = Some(points);
            Ok(())
        })?;
        Ok(())
    }

    /// Measurement update, proposal draw and importance weighting for one
    /// landmark frame. Requires a preceding `predict_step`.
    pub fn update_step(&mut self, frame: &LandmarkFrame) -> Result<(), FilterError> {
        let m_z = frame.measurement_dim();
        assert!(m_z > 0, "update_step requires a non-empty landmark frame");
        let z = frame.stacked_measurement();
        let f_w = frame.world_points();
        let c_f = self
            .config
            .landmark_noise
            .covariance(m_z)
            .map_err(FilterError::Geometry)?;

        let cfg = &self.config;
        let step = self.step;
        let single = self.particles.len() == 1;
        let weights = (&self.weights_m, &self.weights_c);

        // Per particle: posterior moments, new sample, and the two pieces of
        // the log importance ratio (numerator, proposal log-density).
        let logs = try_map_particles(&mut self.particles, |i, p| {
            let wrap = |source| FilterError::Particle { index: i, source };
            let points = p.propagated.take().ok_or_else(|| {
                FilterError::InvalidConfig("update_step called before predict_step".into())
            })?;
            let pred = p.ukf.clone();
            let upd = measurement_update(&pred, &points, weights.0, weights.1, &z, &f_w, &c_f)
                .map_err(wrap)?;

            let proposal_centre = match cfg.proposal_mode {
                ProposalMode::StandardUpf => upd.moments.mean,
                ProposalMode::PaperLiteral => pred.mean,
            };
            let centre_coords = proposal_centre.to_error_coords();
            let sample = if single {
                // One particle cannot be reweighted, so the draw would only
                // inject noise; the proposal mean is the degenerate ensemble.
                NavState::from_error_coords(&centre_coords)
            } else {
                let mut rng = substream(cfg.seed, Domain::Proposal, step, i as u64);
                let coords = sample_gaussian(&centre_coords, &upd.moments.cov, &mut rng)
                    .map_err(wrap)?;
                NavState::from_error_coords(&coords)
            };

            let sample_coords = sample.to_error_coords();
            let log_lik = gaussian_logpdf(&z, &crate::sensing::landmark_h(&sample, &f_w), &c_f)
                .map_err(wrap)?;
            let log_prior = gaussian_logpdf(
                &sample_coords,
                &pred.mean.to_error_coords(),
                &pred.cov,
            )
            .map_err(wrap)?;
            let log_prop = gaussian_logpdf(
                &sample_coords,
                &upd.moments.mean.to_error_coords(),
                &upd.moments.cov,
            )
            .map_err(wrap)?;

            p.ukf = upd.moments;
            p.sample = sample;
            Ok((log_lik + log_prior, log_prop))
        })?;

        // w̃ = exp(num) / (exp(prop) + ε) + ε, evaluated in log domain and
        // shifted by the ensemble maximum so the normalization is stable.
        let ln_eps = self.config.epsilon.ln();
        let ratios: Vec<f64> = logs
            .iter()
            .map(|(num, prop)| num - log_add_exp(*prop, ln_eps))
            .collect();
        let shift = ratios
            .iter()
            .cloned()
            .fold(ln_eps, f64::max);
        let mut total = 0.0;
        for (p, rho) in self.particles.iter_mut().zip(&ratios) {
            let w = (rho - shift).exp() + (ln_eps - shift).exp();
            p.weight = w;
            total += w;
        }
        for p in &mut self.particles {
            p.weight /= total;
        }
        Ok(())
    }

    /// Computes the ESS and, when it falls below the threshold, redraws the
    /// ensemble by systematic resampling over the `(sample, P)` pairs and
    /// resets the weights to uniform. Returns `(resampled, pre-resample ESS)`.
    pub fn resample_if_needed(&mut self) -> (bool, f64) {
        let ess = self.ess();
        if ess >= self.config.ess_threshold {
            return (false, ess);
        }
        let m_p = self.particles.len();
        let mut rng = substream(self.config.seed, Domain::Resample, self.step, 0);
        let u0: f64 = rng.gen::<f64>() / m_p as f64;
        let mut new = Vec::with_capacity(m_p);
        let mut cum = self.particles[0].weight;
        let mut idx = 0;
        for m in 0..m_p {
            let u = u0 + m as f64 / m_p as f64;
            while u > cum && idx + 1 < m_p {
                idx += 1;
                cum += self.particles[idx].weight;
            }
            let mut p = self.particles[idx].clone();
            p.weight = 1.0 / m_p as f64;
            p.propagated = None;
            new.push(p);
        }
        self.particles = new;
        (true, ess)
    }

    /// Weighted ensemble average: eigenvector mean over the sample
    /// quaternions, weighted sums elsewhere. Each UKF mean is then overwritten
    /// with its sample, which seeds the next iteration.
    pub fn estimate(&mut self, t: f64, ess: f64, resampled: bool) -> Result<Estimate, FilterError> {
        let quats: Vec<_> = self.particles.iter().map(|p| p.sample.q).collect();
        let weights: Vec<f64> = self.particles.iter().map(|p| p.weight).collect();
        let q = quat_weighted_mean(&quats, &weights)?;
        let mut p = Vector3::zeros();
        let mut v = Vector3::zeros();
        let mut bw = Vector3::zeros();
        let mut ba = Vector3::zeros();
        for part in &self.particles {
            p += part.sample.p * part.weight;
            v += part.sample.v * part.weight;
            bw += part.sample.b_omega * part.weight;
            ba += part.sample.b_acc * part.weight;
        }
        for part in &mut self.particles {
            part.ukf.mean = part.sample;
        }
        Ok(Estimate {
            t,
            state: NavState {
                q,
                p,
                v,
                b_omega: bw,
                b_acc: ba,
            },
            ess,
            resampled,
        })
    }

    /// Drives the filter over time-ordered IMU and landmark streams.
    ///
    /// One estimate is emitted per IMU sample. Sample `k-1` is held constant
    /// over `[t_{k-1}, t_k]`; the first step propagates over `dt = 0` so a
    /// frame at the initial timestamp still updates the prior. A frame is due
    /// at step `k` when its timestamp is within half a nominal sample time of
    /// `t_k`; empty frames are skipped.
    pub fn run(
        imu: &[ImuSample],
        frames: &[LandmarkFrame],
        config: FilterConfig,
    ) -> Result<Vec<Estimate>, FilterError> {
        for (i, w) in imu.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(FilterError::OutOfOrder {
                    stream: "imu",
                    index: i + 1,
                    t: w[1].t,
                });
            }
        }
        for (i, w) in frames.windows(2).enumerate() {
            if w[1].t < w[0].t {
                return Err(FilterError::OutOfOrder {
                    stream: "landmark",
                    index: i + 1,
                    t: w[1].t,
                });
            }
        }

        let half_window = 0.5 * config.world.dt;
        let mut filter = Qupf::new(config)?;
        let mut out = Vec::with_capacity(imu.len());
        let mut fi = 0;
        for k in 0..imu.len() {
            let t_k = imu[k].t;
            let (u, dt) = if k == 0 {
                (&imu[0], 0.0)
            } else {
                (&imu[k - 1], imu[k].t - imu[k - 1].t)
            };
            filter.predict_step(u, dt)?;

            let mut resampled = false;
            let mut ess = filter.ess();
            while fi < frames.len() && frames[fi].t <= t_k + half_window {
                let frame = &frames[fi];
                fi += 1;
                if frame.landmarks.is_empty() {
                    continue;
                }
                filter.update_step(frame)?;
                let (r, e) = filter.resample_if_needed();
                resampled |= r;
                ess = e;
            }
            out.push(filter.estimate(t_k, ess, resampled)?);
        }
        Ok(out)
    }
}
