//! Implementations of the `simulate`, `run` and `compare` subcommands.

use crate::config::{FilterConfigToml, SimSpecToml};
use anyhow::{bail, Context, Result};
use quatnav::kinematics::{dead_reckon, NavState};
use quatnav::qupf::Qupf;
use quatnav::simkit::dataset::{write_errors, write_states};
use quatnav::simkit::{compute_errors, load_dataset, save_dataset, simulate, Dataset, DatasetFormat, ErrorSummary};
use quatnav::Ekf;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FilterKind {
    Qupf,
    Ekf,
    Deadreckon,
}

impl FilterKind {
    fn name(self) -> &'static str {
        match self {
            FilterKind::Qupf => "qupf",
            FilterKind::Ekf => "ekf",
            FilterKind::Deadreckon => "deadreckon",
        }
    }

    fn parse(name: &str) -> Result<Self> {
        match name {
            "qupf" => Ok(FilterKind::Qupf),
            "ekf" => Ok(FilterKind::Ekf),
            "deadreckon" => Ok(FilterKind::Deadreckon),
            other => bail!("unknown filter `{other}` (expected qupf, ekf or deadreckon)"),
        }
    }
}

pub fn cmd_simulate(spec_path: &Path, out: &Path, seed: u64) -> Result<()> {
    let spec_toml = SimSpecToml::load(spec_path)?;
    let spec = spec_toml.trajectory()?;
    let world = spec_toml.world();
    let (dataset, _) = simulate(
        &spec,
        &world,
        &spec_toml.imu_noise.to_params(),
        &quatnav::sensing::LandmarkNoise::Isotropic {
            sigma_f: spec_toml.landmark_noise.sigma_f,
        },
        seed,
    )?;
    save_dataset(out, &dataset).context("writing dataset")?;
    println!(
        "wrote {}: {} IMU samples at {} Hz, {} landmark frames at {} Hz, {:.1} s",
        out.display(),
        dataset.imu.len(),
        spec.imu_rate,
        dataset.landmarks.len(),
        spec.cam_rate,
        spec.duration
    );
    Ok(())
}

/// Time-ordered dataset sample time: median of consecutive IMU deltas.
fn median_dt(dataset: &Dataset) -> f64 {
    let mut dts: Vec<f64> = dataset.imu.windows(2).map(|w| w[1].t - w[0].t).collect();
    if dts.is_empty() {
        return 0.005;
    }
    dts.sort_by(f64::total_cmp);
    dts[dts.len() / 2]
}

struct RunOutcome {
    estimates: Vec<(f64, NavState)>,
    wall_time_s: f64,
    resample_count: Option<usize>,
    mean_ess: Option<f64>,
}

fn execute_filter(
    kind: FilterKind,
    dataset: &Dataset,
    cfg: &FilterConfigToml,
) -> Result<RunOutcome> {
    let init = cfg.init_state(dataset.truth.as_ref().and_then(|t| t.first()).map(|(_, s)| s))?;
    let fc = cfg.filter_config(init, median_dt(dataset))?;
    let start = Instant::now();
    let (estimates, resample_count, mean_ess) = match kind {
        FilterKind::Qupf => {
            let est = Qupf::run(&dataset.imu, &dataset.landmarks, fc.clone())?;
            let resamples = est.iter().filter(|e| e.resampled).count();
            let mean_ess = est.iter().map(|e| e.ess).sum::<f64>() / est.len().max(1) as f64;
            (
                est.into_iter().map(|e| (e.t, e.state)).collect(),
                Some(resamples),
                Some(mean_ess),
            )
        }
        FilterKind::Ekf => {
            let est = Ekf::run(
                &dataset.imu,
                &dataset.landmarks,
                fc.init_mean,
                fc.init_cov.clone(),
                &fc.imu_noise,
                &fc.landmark_noise,
                &fc.world,
            )?;
            (est, None, None)
        }
        FilterKind::Deadreckon => (dead_reckon(&dataset.imu, &init, &fc.world), None, None),
    };
    Ok(RunOutcome {
        estimates,
        wall_time_s: start.elapsed().as_secs_f64(),
        resample_count,
        mean_ess,
    })
}

#[derive(Serialize)]
struct SummaryJson {
    rmse_rot: f64,
    rmse_pos: f64,
    rmse_vel: f64,
    final_rot: f64,
    final_pos: f64,
    final_vel: f64,
    convergence_time: Option<f64>,
    convergence_threshold: f64,
}

impl From<&ErrorSummary> for SummaryJson {
    fn from(s: &ErrorSummary) -> Self {
        SummaryJson {
            rmse_rot: s.rmse_rot,
            rmse_pos: s.rmse_pos,
            rmse_vel: s.rmse_vel,
            final_rot: s.final_rot,
            final_pos: s.final_pos,
            final_vel: s.final_vel,
            convergence_time: s.convergence_time,
            convergence_threshold: s.convergence_threshold,
        }
    }
}

#[derive(Serialize)]
struct RunReport {
    filter: String,
    dataset: String,
    config: FilterConfigToml,
    wall_time_s: f64,
    resample_count: Option<usize>,
    mean_ess: Option<f64>,
    estimate_count: usize,
    summary: Option<SummaryJson>,
    estimates_csv: String,
    errors_csv: Option<String>,
}

pub fn cmd_run(
    data: &Path,
    filter_flag: Option<FilterKind>,
    config_path: &Path,
    out: &Path,
    format: DatasetFormat,
) -> Result<()> {
    let cfg = FilterConfigToml::load(config_path)?;
    let kind = match filter_flag {
        Some(k) => k,
        None => match &cfg.filter {
            Some(name) => FilterKind::parse(name)?,
            None => bail!("no filter selected: pass --filter or set `filter` in the config"),
        },
    };
    let dataset = load_dataset(data, format).context("loading dataset")?;
    if dataset.imu.is_empty() {
        bail!("dataset {} has no IMU samples", data.display());
    }
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output dir {}", out.display()))?;

    let outcome = execute_filter(kind, &dataset, &cfg)?;

    let est_path = out.join("estimates.csv");
    write_states(&est_path, &outcome.estimates).context("writing estimates.csv")?;

    let mut errors_csv = None;
    let mut summary = None;
    if let Some(truth) = &dataset.truth {
        let (records, s) = compute_errors(
            truth,
            &outcome.estimates,
            cfg.report.convergence_threshold,
        )?;
        let err_path = out.join("errors.csv");
        write_errors(&err_path, &records).context("writing errors.csv")?;
        errors_csv = Some(err_path.display().to_string());
        summary = Some(s);
    }

    let report = RunReport {
        filter: kind.name().to_string(),
        dataset: data.display().to_string(),
        config: cfg,
        wall_time_s: outcome.wall_time_s,
        resample_count: outcome.resample_count,
        mean_ess: outcome.mean_ess,
        estimate_count: outcome.estimates.len(),
        summary: summary.as_ref().map(SummaryJson::from),
        estimates_csv: est_path.display().to_string(),
        errors_csv,
    };
    let report_path = out.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)
        .context("writing report.json")?;

    println!("filter:        {}", report.filter);
    println!("estimates:     {} rows -> {}", report.estimate_count, report.estimates_csv);
    println!("wall time:     {:.3} s", report.wall_time_s);
    if let Some(r) = report.resample_count {
        println!("resamples:     {r}");
    }
    if let Some(e) = report.mean_ess {
        println!("mean ESS:      {e:.1}");
    }
    if let Some(s) = &report.summary {
        println!(
            "RMSE:          rot {:.6} rad | pos {:.6} m | vel {:.6} m/s",
            s.rmse_rot, s.rmse_pos, s.rmse_vel
        );
        println!(
            "final errors:  rot {:.6} rad | pos {:.6} m | vel {:.6} m/s",
            s.final_rot, s.final_pos, s.final_vel
        );
        match s.convergence_time {
            Some(t) => println!(
                "converged:     t = {t:.3} s (‖p_e‖ < {} m onward)",
                s.convergence_threshold
            ),
            None => println!(
                "converged:     never (threshold {} m)",
                s.convergence_threshold
            ),
        }
    } else {
        println!("no ground truth in dataset; error metrics skipped");
    }
    println!("report:        {}", report_path.display());
    Ok(())
}

#[derive(Serialize)]
struct CompareEntry {
    index: usize,
    config: String,
    filter: String,
    wall_time_s: f64,
    summary: SummaryJson,
}

pub fn cmd_compare(
    data: &Path,
    configs: &[PathBuf],
    out: &Path,
    format: DatasetFormat,
) -> Result<()> {
    if configs.len() < 2 {
        bail!("compare needs at least two --configs");
    }
    let dataset = load_dataset(data, format).context("loading dataset")?;
    let truth = dataset
        .truth
        .clone()
        .ok_or_else(|| anyhow::anyhow!("compare requires a dataset with groundtruth.csv"))?;
    std::fs::create_dir_all(out)?;

    let mut entries = Vec::new();
    let mut error_tracks = Vec::new();
    for (i, path) in configs.iter().enumerate() {
        let cfg = FilterConfigToml::load(path)?;
        let kind = match &cfg.filter {
            Some(name) => FilterKind::parse(name)?,
            None => FilterKind::Qupf,
        };
        let outcome = execute_filter(kind, &dataset, &cfg)?;
        let (records, summary) =
            compute_errors(&truth, &outcome.estimates, cfg.report.convergence_threshold)?;
        entries.push(CompareEntry {
            index: i,
            config: path.display().to_string(),
            filter: kind.name().to_string(),
            wall_time_s: outcome.wall_time_s,
            summary: SummaryJson::from(&summary),
        });
        error_tracks.push(records);
    }

    // Side-by-side per-step error norms, one column triple per config.
    let mut header = String::from("t");
    for e in &entries {
        header.push_str(&format!(
            ",f{idx}_re,f{idx}_pe,f{idx}_ve",
            idx = e.index
        ));
    }
    header.push('\n');
    let mut body = String::new();
    for row in 0..error_tracks[0].len() {
        body.push_str(&format!("{}", error_tracks[0][row].t));
        for track in &error_tracks {
            let r = &track[row];
            body.push_str(&format!(",{},{},{}", r.r_norm, r.p_norm, r.v_norm));
        }
        body.push('\n');
    }
    let cmp_path = out.join("comparison.csv");
    std::fs::write(&cmp_path, header + &body).context("writing comparison.csv")?;

    let mut ranking: Vec<usize> = (0..entries.len()).collect();
    ranking.sort_by(|&a, &b| {
        entries[a]
            .summary
            .rmse_pos
            .total_cmp(&entries[b].summary.rmse_pos)
    });

    let summary_path = out.join("comparison_summary.json");
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "dataset": data.display().to_string(),
            "entries": entries,
            "ranking_by_rmse_pos": ranking,
        }))?,
    )?;

    println!("comparison over {} rows -> {}", error_tracks[0].len(), cmp_path.display());
    println!("rank  filter      config                                rmse_pos   rmse_rot   rmse_vel");
    for (rank, &i) in ranking.iter().enumerate() {
        let e = &entries[i];
        println!(
            "{:>4}  f{}={:<9} {:<36} {:>9.5} {:>9.5} {:>9.5}",
            rank + 1,
            e.index,
            e.filter,
            e.config,
            e.summary.rmse_pos,
            e.summary.rmse_rot,
            e.summary.rmse_vel
        );
    }
    println!("summary: {}", summary_path.display());
    Ok(())
}
