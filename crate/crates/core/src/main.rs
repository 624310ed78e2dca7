use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rollgov::harness::{
    read_metrics, write_baselines, write_manifest, write_sweep, ExperimentConfig, GovernorKind, NoiseSpec,
    RunOutcome, Setup, SweepOutput, BASELINES_FILE, METRICS_FILE,
};
use rollgov::Result;

#[derive(Parser)]
#[command(name = "rollgov", version, about = "Reference-governor rollover avoidance experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated governors: off, lrg, lrg-<bank>, ecg, nrg<iters>.
    #[arg(short, long, value_delimiter = ',')]
    governors: Option<Vec<GovernorKind>>,
    /// Comma-separated steering amplitudes [deg].
    #[arg(short, long, value_delimiter = ',')]
    amplitudes: Option<Vec<f64>>,
    /// Worker threads; zero uses all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Zero all solve times so repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// One governor at one amplitude.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "lrg")]
        governor: GovernorKind,
        #[arg(long, default_value_t = 150.0)]
        amplitude: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Every governor over the amplitude grid.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep under estimation noise with per-cell statistics over seeds.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        /// Relative roll-angle noise; replaces the configured noise.
        #[arg(long)]
        sigma_phi: Option<f64>,
        /// Number of seeds 1..=N when no seed list is given.
        #[arg(long, default_value_t = 50)]
        samples: u64,
    },
    /// NoLift and LimLift scales and the NRG4 reference per amplitude.
    Baselines {
        #[command(flatten)]
        common: Common,
    },
    /// Summarise a metrics.csv produced by sweep or montecarlo.
    Report {
        /// Directory holding metrics.csv.
        dir: PathBuf,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = &common.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(g) = &common.governors {
        cfg.governor.kinds = g.clone();
    }
    if let Some(a) = &common.amplitudes {
        cfg.maneuver.amplitudes_deg = a.clone();
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if common.no_timing {
        cfg.record_timing = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summarise(out: &SweepOutput) -> bool {
    for r in out.runs.iter().filter(|r| r.failed()) {
        log::error!(
            "{} at {} deg seed {} failed: {}",
            r.point.governor,
            r.point.amplitude_deg,
            r.point.seed,
            r.error().unwrap_or_default()
        );
    }
    let failed = out.runs.iter().filter(|r| r.failed()).count();
    println!("{} runs, {} failed", out.runs.len(), failed);
    !out.any_failed()
}

fn print_run(r: &RunOutcome) {
    match (&r.result, &r.metrics) {
        (Ok(res), Some(Ok(m))) => {
            println!(
                "{} {} deg: max wheel lift {:.4} m, effectiveness {:.4}, active {:.3}",
                r.point.governor, r.point.amplitude_deg, res.max_wheel_lift, m.eta_lift, m.active_fraction
            );
            for (name, chi) in &m.chi_by_baseline {
                println!("  vs {name}: chi {chi:.4}, eta_psi {:.4}", m.eta_psi_by_baseline[name]);
            }
        }
        _ => println!("{} {} deg: failed: {}", r.point.governor, r.point.amplitude_deg, r.error().unwrap_or_default()),
    }
}

fn report(dir: &Path) -> Result<bool> {
    let rows = read_metrics(&dir.join(METRICS_FILE))?;
    let mut groups: BTreeMap<(String, String), Vec<_>> = BTreeMap::new();
    let mut failures = 0;
    for r in &rows {
        if !r.error.is_empty() {
            failures += 1;
            continue;
        }
        groups.entry((r.governor.clone(), r.baseline.clone())).or_default().push(r);
    }
    println!(
        "{:<12} {:<8} {:>5} {:>10} {:>10} {:>10} {:>10}",
        "governor", "baseline", "runs", "min_eta", "mean_chi", "mean_psi", "max_act"
    );
    for ((g, b), rs) in &groups {
        let n = rs.len() as f64;
        let min_eta = rs.iter().filter_map(|r| r.eta_lift).fold(f64::INFINITY, f64::min);
        let chi = rs.iter().filter_map(|r| r.chi).sum::<f64>() / n;
        let psi = rs.iter().filter_map(|r| r.eta_psi).sum::<f64>() / n;
        let act = rs.iter().filter_map(|r| r.active_fraction).fold(0.0, f64::max);
        println!("{g:<12} {b:<8} {:>5} {min_eta:>10.4} {chi:>10.4} {psi:>10.4} {act:>10.4}", rs.len());
    }
    println!("{failures} failed rows");
    Ok(failures == 0)
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            common,
            governor,
            amplitude,
            seed,
        } => {
            let mut cfg = load(&common)?;
            cfg.governor.kinds = vec![governor];
            cfg.maneuver.amplitudes_deg = vec![amplitude];
            cfg.seeds = vec![seed];
            let setup = Setup::new(cfg)?;
            let out = setup.sweep(true)?;
            write_sweep(&setup.config.output_dir, &setup.config, "run", &out, false)?;
            out.runs.iter().for_each(print_run);
            Ok(summarise(&out))
        }
        Command::Sweep { common } => {
            let setup = Setup::new(load(&common)?)?;
            let out = setup.sweep(true)?;
            write_sweep(&setup.config.output_dir, &setup.config, "sweep", &out, false)?;
            Ok(summarise(&out))
        }
        Command::Montecarlo {
            common,
            sigma_phi,
            samples,
        } => {
            let mut cfg = load(&common)?;
            if let Some(s) = sigma_phi {
                cfg.noise = NoiseSpec::roll(s);
            }
            if common.seeds.is_none() {
                cfg.seeds = (1..=samples.max(1)).collect();
            }
            cfg.validate()?;
            let setup = Setup::new(cfg)?;
            let out = setup.sweep(true)?;
            write_sweep(&setup.config.output_dir, &setup.config, "montecarlo", &out, true)?;
            for s in out.stats() {
                println!(
                    "{} {} deg: mean effectiveness {:.4}, failures {}",
                    s.governor, s.amplitude_deg, s.eta_lift_mean, s.failures
                );
            }
            Ok(summarise(&out))
        }
        Command::Baselines { common } => {
            let cfg = load(&common)?;
            let setup = Setup::for_kinds(cfg, &[])?;
            let dir = &setup.config.output_dir;
            std::fs::create_dir_all(dir)?;
            let b = setup.all_baselines()?;
            write_baselines(dir, &setup.config.maneuver.amplitudes_deg, &b)?;
            let failures = b.iter().filter(|x| x.is_err()).count();
            write_manifest(dir, &setup.config, "baselines", b.len(), failures, vec![BASELINES_FILE])?;
            for (a, r) in setup.config.maneuver.amplitudes_deg.iter().zip(&b) {
                match r {
                    Ok(r) => println!(
                        "{a} deg: nolift scale {:.4}, limlift scale {:.4}, nrg4 lift {:.4} m",
                        r.nolift_scale, r.limlift_scale, r.nrg4.max_wheel_lift
                    ),
                    Err(e) => println!("{a} deg: failed: {e}"),
                }
            }
            Ok(failures == 0)
        }
        Command::Report { dir } => report(&dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
