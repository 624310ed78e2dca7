use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{BankId, ExperimentConfig, GovernorKind, NoiseSpec};
use super::sim::{simulate, SimResult};
use crate::error::{Error, Result};
use crate::governor::{EcgGovernor, Governor, GovernorBank, LrgGovernor, NrgGovernor, PassThrough};
use crate::laguerre::LaguerreBasis;
use crate::linear::{linearize, MplBank};
use crate::maneuver::{ManeuverSpec, SETTLE_TIME};
use crate::metrics::{self, BaselineTraces, MetricsReport, RunTraces};
use crate::oinf::OutputConstraints;
use crate::params::{PlantParamsFile, TireParams, VehicleParams};
use crate::vehicle::Vehicle;

/// Random number generator used for estimation noise.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), stream = amplitude bits";

/// Plant, constraints and prebuilt governor banks shared by all runs.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub vehicle: Vehicle,
    pub yc: OutputConstraints,
    /// Steady yaw rate per steering-wheel radian at zero steering.
    pub yaw_gain0: f64,
    /// Laguerre pole used by the command governor.
    pub alpha: f64,
    banks: BTreeMap<BankId, Arc<GovernorBank>>,
}

impl Setup {
    /// Build everything the configured governors need.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let kinds = config.governor.kinds.clone();
        Self::for_kinds(config, &kinds)
    }

    /// Build banks for `kinds`, which may differ from the configured list.
    /// NRG4 is always available for the baseline.
    pub fn for_kinds(config: ExperimentConfig, kinds: &[GovernorKind]) -> Result<Self> {
        config.validate()?;
        let (params, tire) = match &config.plant.params_file {
            Some(path) => {
                let f = PlantParamsFile::load(path)?;
                (f.vehicle, f.tire)
            }
            None => (VehicleParams::default(), TireParams::for_surface(config.plant.surface)),
        };
        let vehicle = Vehicle::new(params, tire)?;
        let g = &config.governor;
        let yc = OutputConstraints::new(g.ltr_lim, g.delta_sw_lim_deg.to_radians())?;
        let origin = linearize(&vehicle.params, &vehicle.tire, &vehicle.config, config.plant.speed, 0.0)?;
        let yaw_gain0 = origin.steady_state_gain()?[1];
        let alpha = match g.alpha {
            Some(a) => a,
            None => LaguerreBasis::from_time_constant(config.dt, origin.slowest_time_constant()?, g.depth)?.alpha,
        };

        let mut wanted: BTreeMap<BankId, bool> = BTreeMap::new();
        for k in kinds {
            match k {
                GovernorKind::Lrg(b) => {
                    wanted.entry(b.unwrap_or(g.bank)).or_insert(false);
                }
                GovernorKind::Ecg => {
                    wanted.insert(g.bank, true);
                }
                GovernorKind::Off | GovernorKind::Nrg(_) => {}
            }
        }
        let mut banks = BTreeMap::new();
        for (id, with_ecg) in wanted {
            let models = MplBank::build(
                &vehicle.params,
                &vehicle.tire,
                &vehicle.config,
                config.plant.speed,
                id.points_deg(),
                config.dt,
            )?;
            let mut bank = GovernorBank::build(models, yc.clone(), g.horizon, g.epsilon)?;
            if with_ecg {
                bank = bank.with_ecg(LaguerreBasis::new(alpha, g.depth)?)?;
            }
            banks.insert(id, Arc::new(bank));
        }
        Ok(Self {
            config,
            vehicle,
            yc,
            yaw_gain0,
            alpha,
            banks,
        })
    }

    pub fn bank(&self, id: BankId) -> Option<&Arc<GovernorBank>> {
        self.banks.get(&id)
    }

    pub fn governor(&self, kind: GovernorKind) -> Result<Box<dyn Governor>> {
        let g = &self.config.governor;
        let missing = |id: BankId| Error::Config(format!("bank `{}` was not built", id.as_str()));
        Ok(match kind {
            GovernorKind::Off => Box::new(PassThrough),
            GovernorKind::Lrg(b) => {
                let id = b.unwrap_or(g.bank);
                let bank = self.banks.get(&id).ok_or_else(|| missing(id))?.clone();
                Box::new(
                    LrgGovernor::new(bank, self.vehicle.params.clone(), g.recovery, g.use_disturbance)
                        .with_label(kind.to_string()),
                )
            }
            GovernorKind::Ecg => {
                let bank = self.banks.get(&g.bank).ok_or_else(|| missing(g.bank))?.clone();
                Box::new(EcgGovernor::new(bank, self.vehicle.params.clone(), g.k_l, g.use_disturbance)?)
            }
            GovernorKind::Nrg(iters) => Box::new(NrgGovernor::new(self.vehicle.clone(), &self.yc, iters, self.config.dt)),
        })
    }

    pub fn maneuver(&self, amplitude_deg: f64) -> ManeuverSpec {
        let mut m = ManeuverSpec::sine_with_dwell_deg(amplitude_deg).with_speed(self.config.plant.speed);
        m.frequency = self.config.maneuver.frequency;
        m.dwell = self.config.maneuver.dwell;
        m.duration = m.waveform_end() + SETTLE_TIME;
        m
    }

    /// One closed-loop run. Noise is applied when `noisy` and the configured
    /// noise is non-zero.
    pub fn run(&self, kind: GovernorKind, maneuver: &ManeuverSpec, seed: u64, noisy: bool) -> Result<SimResult> {
        let mut governor = self.governor(kind)?;
        let noise = self.config.noise;
        if noisy && !noise.is_zero() {
            let mut rng = noise_rng(seed, maneuver.amplitude.to_degrees());
            simulate(
                &self.vehicle,
                maneuver,
                governor.as_mut(),
                self.config.dt,
                Some((&noise, &mut rng)),
                self.config.record_timing,
            )
        } else {
            simulate::<ChaCha8Rng>(&self.vehicle, maneuver, governor.as_mut(), self.config.dt, None, self.config.record_timing)
        }
    }

    /// Noise-free ungoverned run at `scale` of the amplitude.
    fn scaled_run(&self, amplitude_deg: f64, scale: f64) -> Result<SimResult> {
        let r = self.run(GovernorKind::Off, &self.maneuver(amplitude_deg).with_scale(scale), 0, false)?;
        match r.error {
            Some(e) => Err(Error::Divergence { t: f64::NAN, what: e }),
            None => Ok(r),
        }
    }

    /// NoLift and LimLift scales and the three safe trajectories.
    pub fn baselines(&self, amplitude_deg: f64) -> Result<Baselines> {
        let nolift_scale = metrics::find_safe_scale(0.0, |s| Ok(self.scaled_run(amplitude_deg, s)?.max_wheel_lift))?;
        let limlift_scale =
            metrics::find_safe_scale(self.config.lift_limit, |s| Ok(self.scaled_run(amplitude_deg, s)?.max_wheel_lift))?;
        Ok(Baselines {
            amplitude_deg,
            nolift_scale,
            limlift_scale,
            nolift: self.scaled_run(amplitude_deg, nolift_scale)?,
            limlift: self.scaled_run(amplitude_deg, limlift_scale)?,
            nrg4: self.run(GovernorKind::Nrg(4), &self.maneuver(amplitude_deg), 0, false)?,
        })
    }

    pub fn evaluate(&self, run: &SimResult, baselines: &Baselines) -> Result<MetricsReport> {
        let (reference, applied, yaw, active, times) =
            (run.reference(), run.applied(), run.yaw_rate(), run.active(), run.solve_times());
        let traces = RunTraces {
            reference: &reference,
            applied: &applied,
            yaw_rate: &yaw,
            active: &active,
            solve_times: &times,
            max_wheel_lift: run.max_wheel_lift,
        };
        let safe: Vec<(&str, Vec<f64>, Vec<f64>)> = [
            ("nolift", &baselines.nolift),
            ("nrg4", &baselines.nrg4),
            ("limlift", &baselines.limlift),
        ]
        .into_iter()
        .map(|(n, r)| (n, r.applied(), r.yaw_rate()))
        .collect();
        let refs: Vec<BaselineTraces<'_>> = safe
            .iter()
            .map(|(n, c, y)| BaselineTraces {
                name: n,
                command: c,
                yaw_rate: y,
            })
            .collect();
        metrics::evaluate_run(&traces, &refs, self.yaw_gain0, self.config.lift_limit, self.config.dt)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }

    /// Baselines for every configured amplitude.
    pub fn all_baselines(&self) -> Result<Vec<std::result::Result<Baselines, String>>> {
        let amps = self.config.maneuver.amplitudes_deg.clone();
        Ok(self.pool()?.install(|| {
            amps.par_iter()
                .map(|a| self.baselines(*a).map_err(|e| e.to_string()))
                .collect()
        }))
    }

    /// Every configured governor, amplitude and seed, evaluated against the
    /// noise-free baselines. Failures are recorded per run.
    pub fn sweep(&self, noisy: bool) -> Result<SweepOutput> {
        log::info!("computing baselines for {} amplitudes", self.config.maneuver.amplitudes_deg.len());
        let baselines = self.all_baselines()?;
        let by_amp: BTreeMap<u64, &std::result::Result<Baselines, String>> = self
            .config
            .maneuver
            .amplitudes_deg
            .iter()
            .zip(&baselines)
            .map(|(a, b)| (a.to_bits(), b))
            .collect();
        let mut points = Vec::new();
        for kind in &self.config.governor.kinds {
            for amp in &self.config.maneuver.amplitudes_deg {
                for seed in &self.config.seeds {
                    points.push(RunPoint {
                        governor: *kind,
                        amplitude_deg: *amp,
                        seed: *seed,
                    });
                }
            }
        }
        log::info!("running {} simulations", points.len());
        let mut runs: Vec<RunOutcome> = self.pool()?.install(|| {
            points
                .par_iter()
                .map(|p| {
                    let result = self
                        .run(p.governor, &self.maneuver(p.amplitude_deg), p.seed, noisy)
                        .map_err(|e| e.to_string());
                    let metrics = match (&result, by_amp[&p.amplitude_deg.to_bits()]) {
                        (Ok(r), Ok(b)) if r.error.is_none() => Some(self.evaluate(r, b).map_err(|e| e.to_string())),
                        (Ok(r), _) if r.error.is_some() => Some(Err(r.error.clone().unwrap_or_default())),
                        (_, Err(e)) => Some(Err(format!("baseline: {e}"))),
                        _ => None,
                    };
                    log::info!("{} at {} deg, seed {} done", p.governor, p.amplitude_deg, p.seed);
                    RunOutcome {
                        point: *p,
                        result,
                        metrics,
                    }
                })
                .collect()
        });
        runs.sort_by(|a, b| a.point.sort_key().partial_cmp(&b.point.sort_key()).unwrap());
        Ok(SweepOutput { runs, baselines })
    }
}

pub fn noise_rng(seed: u64, amplitude_deg: f64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(amplitude_deg.to_bits());
    rng
}

/// Safe trajectories for one amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Baselines {
    pub amplitude_deg: f64,
    pub nolift_scale: f64,
    pub limlift_scale: f64,
    pub nolift: SimResult,
    pub limlift: SimResult,
    pub nrg4: SimResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunPoint {
    pub governor: GovernorKind,
    pub amplitude_deg: f64,
    pub seed: u64,
}

impl RunPoint {
    fn sort_key(&self) -> (String, f64, u64) {
        (self.governor.to_string(), self.amplitude_deg, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub point: RunPoint,
    pub result: std::result::Result<SimResult, String>,
    pub metrics: Option<std::result::Result<MetricsReport, String>>,
}

impl RunOutcome {
    pub fn failed(&self) -> bool {
        self.result.is_err() || matches!(self.metrics, Some(Err(_)))
    }

    pub fn error(&self) -> Option<String> {
        match (&self.result, &self.metrics) {
            (Err(e), _) => Some(e.clone()),
            (_, Some(Err(e))) => Some(e.clone()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub runs: Vec<RunOutcome>,
    pub baselines: Vec<std::result::Result<Baselines, String>>,
}

/// Per governor and amplitude statistics over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub governor: String,
    pub amplitude_deg: f64,
    pub runs: usize,
    pub failures: usize,
    pub eta_lift_mean: f64,
    pub eta_lift_min: f64,
    pub max_wheel_lift_max: f64,
    pub chi_nolift_mean: f64,
    pub chi_nrg4_mean: f64,
    pub chi_limlift_mean: f64,
    pub active_fraction_mean: f64,
    pub solve_time_mean: f64,
    pub solve_time_max: f64,
}

impl SweepOutput {
    pub fn any_failed(&self) -> bool {
        self.runs.iter().any(RunOutcome::failed) || self.baselines.iter().any(|b| b.is_err())
    }

    pub fn stats(&self) -> Vec<StatsRow> {
        let mut groups: BTreeMap<(String, u64), Vec<&RunOutcome>> = BTreeMap::new();
        for r in &self.runs {
            groups
                .entry((r.point.governor.to_string(), r.point.amplitude_deg.to_bits()))
                .or_default()
                .push(r);
        }
        let mut rows: Vec<StatsRow> = groups
            .into_iter()
            .map(|((governor, amp), runs)| {
                let ok: Vec<&MetricsReport> = runs
                    .iter()
                    .filter_map(|r| r.metrics.as_ref().and_then(|m| m.as_ref().ok()))
                    .collect();
                let mean = |f: &dyn Fn(&MetricsReport) -> f64| {
                    if ok.is_empty() {
                        f64::NAN
                    } else {
                        ok.iter().map(|m| f(m)).sum::<f64>() / ok.len() as f64
                    }
                };
                let chi = |name: &'static str| move |m: &MetricsReport| m.chi_by_baseline[name];
                StatsRow {
                    governor,
                    amplitude_deg: f64::from_bits(amp),
                    runs: runs.len(),
                    failures: runs.len() - ok.len(),
                    eta_lift_mean: mean(&|m| m.eta_lift),
                    eta_lift_min: ok.iter().map(|m| m.eta_lift).fold(f64::INFINITY, f64::min),
                    max_wheel_lift_max: ok.iter().map(|m| m.max_wheel_lift).fold(0.0, f64::max),
                    chi_nolift_mean: mean(&chi("nolift")),
                    chi_nrg4_mean: mean(&chi("nrg4")),
                    chi_limlift_mean: mean(&chi("limlift")),
                    active_fraction_mean: mean(&|m| m.active_fraction),
                    solve_time_mean: mean(&|m| m.solve_time_mean),
                    solve_time_max: ok.iter().map(|m| m.solve_time_max).fold(0.0, f64::max),
                }
            })
            .collect();
        rows.sort_by(|a, b| (&a.governor, a.amplitude_deg).partial_cmp(&(&b.governor, b.amplitude_deg)).unwrap());
        rows
    }
}

/// Noise configuration for a roll-only estimation-error study.
pub fn roll_noise(config: &ExperimentConfig, sigma: f64) -> ExperimentConfig {
    ExperimentConfig {
        noise: NoiseSpec::roll(sigma),
        ..config.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.governor.bank = BankId::Single;
        cfg.governor.horizon = 50;
        cfg.governor.kinds = vec![GovernorKind::Off, GovernorKind::Lrg(None)];
        cfg.maneuver.amplitudes_deg = vec![10.0, 150.0];
        cfg.record_timing = false;
        cfg
    }

    #[test]
    fn yaw_gain_and_alpha_are_sensible() {
        let s = Setup::new(small_config()).unwrap();
        assert!(s.yaw_gain0 > 0.0);
        assert!(s.alpha > 0.9 && s.alpha < 1.0);
        assert!(s.bank(BankId::Single).is_some());
        assert!(s.governor(GovernorKind::Ecg).is_err());
    }

    #[test]
    fn low_amplitude_runs_are_untouched_and_high_ones_governed() {
        let s = Setup::new(small_config()).unwrap();
        let low = s.run(GovernorKind::Lrg(None), &s.maneuver(10.0), 1, false).unwrap();
        assert_eq!(low.active_fraction(), 0.0);
        let high = s.run(GovernorKind::Lrg(None), &s.maneuver(150.0), 1, false).unwrap();
        assert!(high.active_fraction() > 0.0);
        let off = s.run(GovernorKind::Off, &s.maneuver(150.0), 1, false).unwrap();
        assert!(high.max_wheel_lift < off.max_wheel_lift);
    }

    #[test]
    fn stream_depends_on_amplitude() {
        use rand::Rng;
        let a: u64 = noise_rng(1, 10.0).random();
        let b: u64 = noise_rng(1, 20.0).random();
        let c: u64 = noise_rng(1, 10.0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
