//! CSV and manifest writers for experiment results.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::experiment::{Baselines, RunOutcome, StatsRow, SweepOutput, RNG_NAME};
use crate::error::Result;
use crate::vehicle::Contact;

pub const TRACES_FILE: &str = "traces.csv";
pub const DECISIONS_FILE: &str = "decisions.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BASELINES_FILE: &str = "baselines.csv";
pub const STATS_FILE: &str = "montecarlo.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize)]
struct TraceRow<'a> {
    governor: &'a str,
    amplitude_deg: f64,
    seed: u64,
    t: f64,
    reference: f64,
    applied: f64,
    ltr: f64,
    wheel_lift: f64,
    sprung_roll: f64,
    yaw_rate: f64,
    lateral_speed: f64,
    contact: Contact,
}

#[derive(Serialize)]
struct DecisionRow<'a> {
    governor: &'a str,
    amplitude_deg: f64,
    seed: u64,
    t: f64,
    reference: f64,
    applied: f64,
    active: bool,
    feasibility_level: i8,
    recovery: &'a str,
    rows_removed: usize,
    relax_epsilon: f64,
    qp_invoked: bool,
    solve_time: f64,
}

/// One line of `metrics.csv`: a run evaluated against one baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub governor: String,
    pub amplitude_deg: f64,
    pub seed: u64,
    pub baseline: String,
    pub eta_lift: Option<f64>,
    pub max_wheel_lift: Option<f64>,
    pub chi: Option<f64>,
    pub eta_psi: Option<f64>,
    pub active_fraction: Option<f64>,
    pub solve_time_mean: Option<f64>,
    pub solve_time_max: Option<f64>,
    pub error: String,
}

#[derive(Serialize)]
struct BaselineRow {
    amplitude_deg: f64,
    nolift_scale: Option<f64>,
    limlift_scale: Option<f64>,
    nolift_max_lift: Option<f64>,
    limlift_max_lift: Option<f64>,
    nrg4_max_lift: Option<f64>,
    nrg4_active_fraction: Option<f64>,
    error: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    crate_name: &'a str,
    crate_version: &'a str,
    command: &'a str,
    config_sha256: String,
    rng: &'a str,
    runs: usize,
    failures: usize,
    files: Vec<&'a str>,
    config: &'a ExperimentConfig,
}

pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    Ok(hex::encode(Sha256::digest(config.to_toml()?.as_bytes())))
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(dir.join(name))?)
}

pub fn write_traces(dir: &Path, runs: &[RunOutcome]) -> Result<()> {
    let mut w = writer(dir, TRACES_FILE)?;
    for run in runs {
        let Ok(res) = &run.result else { continue };
        let name = run.point.governor.to_string();
        for s in &res.steps {
            w.serialize(TraceRow {
                governor: &name,
                amplitude_deg: run.point.amplitude_deg,
                seed: run.point.seed,
                t: s.t,
                reference: s.reference,
                applied: s.v,
                ltr: s.ltr,
                wheel_lift: s.wheel_lift,
                sprung_roll: s.sprung_roll,
                yaw_rate: s.yaw_rate,
                lateral_speed: s.lateral_speed,
                contact: s.contact,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_decisions(dir: &Path, runs: &[RunOutcome]) -> Result<()> {
    let mut w = writer(dir, DECISIONS_FILE)?;
    for run in runs {
        let Ok(res) = &run.result else { continue };
        let name = run.point.governor.to_string();
        for s in &res.steps {
            let d = &s.decision;
            w.serialize(DecisionRow {
                governor: &name,
                amplitude_deg: run.point.amplitude_deg,
                seed: run.point.seed,
                t: s.t,
                reference: d.reference,
                applied: d.v,
                active: d.active,
                feasibility_level: d.feasibility_level,
                recovery: d.recovery_used.as_str(),
                rows_removed: d.rows_removed,
                relax_epsilon: d.relax_epsilon,
                qp_invoked: d.qp_invoked,
                solve_time: d.solve_time,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn metrics_rows(runs: &[RunOutcome]) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    for run in runs {
        let base = MetricsRow {
            governor: run.point.governor.to_string(),
            amplitude_deg: run.point.amplitude_deg,
            seed: run.point.seed,
            baseline: String::new(),
            eta_lift: None,
            max_wheel_lift: None,
            chi: None,
            eta_psi: None,
            active_fraction: None,
            solve_time_mean: None,
            solve_time_max: None,
            error: run.error().unwrap_or_default(),
        };
        match &run.metrics {
            Some(Ok(m)) => {
                for (name, chi) in &m.chi_by_baseline {
                    rows.push(MetricsRow {
                        baseline: name.clone(),
                        eta_lift: Some(m.eta_lift),
                        max_wheel_lift: Some(m.max_wheel_lift),
                        chi: Some(*chi),
                        eta_psi: m.eta_psi_by_baseline.get(name).copied(),
                        active_fraction: Some(m.active_fraction),
                        solve_time_mean: Some(m.solve_time_mean),
                        solve_time_max: Some(m.solve_time_max),
                        ..base.clone()
                    });
                }
            }
            _ => rows.push(base),
        }
    }
    rows
}

pub fn write_metrics(dir: &Path, runs: &[RunOutcome]) -> Result<()> {
    let mut w = writer(dir, METRICS_FILE)?;
    for row in metrics_rows(runs) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_baselines(dir: &Path, amplitudes: &[f64], baselines: &[std::result::Result<Baselines, String>]) -> Result<()> {
    let mut w = writer(dir, BASELINES_FILE)?;
    for (amp, b) in amplitudes.iter().zip(baselines) {
        let row = match b {
            Ok(b) => BaselineRow {
                amplitude_deg: *amp,
                nolift_scale: Some(b.nolift_scale),
                limlift_scale: Some(b.limlift_scale),
                nolift_max_lift: Some(b.nolift.max_wheel_lift),
                limlift_max_lift: Some(b.limlift.max_wheel_lift),
                nrg4_max_lift: Some(b.nrg4.max_wheel_lift),
                nrg4_active_fraction: Some(b.nrg4.active_fraction()),
                error: String::new(),
            },
            Err(e) => BaselineRow {
                amplitude_deg: *amp,
                nolift_scale: None,
                limlift_scale: None,
                nolift_max_lift: None,
                limlift_max_lift: None,
                nrg4_max_lift: None,
                nrg4_active_fraction: None,
                error: e.clone(),
            },
        };
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_stats(dir: &Path, stats: &[StatsRow]) -> Result<()> {
    let mut w = writer(dir, STATS_FILE)?;
    for row in stats {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_manifest(
    dir: &Path,
    config: &ExperimentConfig,
    command: &str,
    runs: usize,
    failures: usize,
    files: Vec<&str>,
) -> Result<PathBuf> {
    let manifest = Manifest {
        crate_name: env!("CARGO_PKG_NAME"),
        crate_version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: config_hash(config)?,
        rng: RNG_NAME,
        runs,
        failures,
        files,
        config,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Write every file a sweep produces. `with_stats` adds the per-seed
/// aggregate table.
pub fn write_sweep(dir: &Path, config: &ExperimentConfig, command: &str, out: &SweepOutput, with_stats: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_traces(dir, &out.runs)?;
    write_decisions(dir, &out.runs)?;
    write_metrics(dir, &out.runs)?;
    write_baselines(dir, &config.maneuver.amplitudes_deg, &out.baselines)?;
    let mut files = vec![TRACES_FILE, DECISIONS_FILE, METRICS_FILE, BASELINES_FILE];
    if with_stats {
        write_stats(dir, &out.stats())?;
        files.push(STATS_FILE);
    }
    let failures = out.runs.iter().filter(|r| r.failed()).count();
    write_manifest(dir, config, command, out.runs.len(), failures, files)?;
    Ok(())
}
