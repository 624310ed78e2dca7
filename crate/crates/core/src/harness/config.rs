use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::governor::Recovery;
use crate::linear;
use crate::maneuver::ManeuverSpec;
use crate::metrics::DEFAULT_LIFT_LIMIT;
use crate::params::Surface;

/// Named operating-point lists for the linear model bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankId {
    Single,
    Coarse,
    Rgmpl1,
    Rgmpl2,
    Rgmpl3,
}

impl BankId {
    pub fn points_deg(self) -> &'static [f64] {
        match self {
            BankId::Single => linear::BANK_SINGLE,
            BankId::Coarse => linear::BANK_COARSE,
            BankId::Rgmpl1 => linear::BANK_RGMPL1,
            BankId::Rgmpl2 => linear::BANK_RGMPL2,
            BankId::Rgmpl3 => linear::BANK_RGMPL3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BankId::Single => "single",
            BankId::Coarse => "coarse",
            BankId::Rgmpl1 => "rgmpl1",
            BankId::Rgmpl2 => "rgmpl2",
            BankId::Rgmpl3 => "rgmpl3",
        }
    }
}

impl FromStr for BankId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "single" => BankId::Single,
            "coarse" => BankId::Coarse,
            "rgmpl1" => BankId::Rgmpl1,
            "rgmpl2" => BankId::Rgmpl2,
            "rgmpl3" => BankId::Rgmpl3,
            other => return Err(Error::Config(format!("unknown bank `{other}`"))),
        })
    }
}

/// Governor selection, written as `off`, `lrg`, `lrg-<bank>`, `ecg` or
/// `nrg<iterations>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GovernorKind {
    Off,
    /// `None` uses the configured default bank.
    Lrg(Option<BankId>),
    Ecg,
    Nrg(usize),
}

impl FromStr for GovernorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "off" || s == "none" {
            return Ok(GovernorKind::Off);
        }
        if s == "lrg" {
            return Ok(GovernorKind::Lrg(None));
        }
        if let Some(bank) = s.strip_prefix("lrg-") {
            return Ok(GovernorKind::Lrg(Some(bank.parse()?)));
        }
        if s == "ecg" {
            return Ok(GovernorKind::Ecg);
        }
        if let Some(n) = s.strip_prefix("nrg") {
            let iters: usize = n
                .parse()
                .map_err(|_| Error::Config(format!("bad NRG iteration count in `{s}`")))?;
            if iters == 0 {
                return Err(Error::Config("NRG needs at least one iteration".into()));
            }
            return Ok(GovernorKind::Nrg(iters));
        }
        Err(Error::Config(format!("unknown governor `{s}`")))
    }
}

impl fmt::Display for GovernorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GovernorKind::Off => write!(f, "off"),
            GovernorKind::Lrg(None) => write!(f, "lrg"),
            GovernorKind::Lrg(Some(b)) => write!(f, "lrg-{}", b.as_str()),
            GovernorKind::Ecg => write!(f, "ecg"),
            GovernorKind::Nrg(n) => write!(f, "nrg{n}"),
        }
    }
}

impl Serialize for GovernorKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for GovernorKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    /// TOML file with vehicle and tire overrides.
    pub params_file: Option<PathBuf>,
    pub surface: Surface,
    /// Forward speed [m/s].
    pub speed: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            params_file: None,
            surface: Surface::Dry,
            speed: ManeuverSpec::DEFAULT_SPEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManeuverSection {
    pub frequency: f64,
    pub dwell: f64,
    pub amplitudes_deg: Vec<f64>,
}

impl Default for ManeuverSection {
    fn default() -> Self {
        Self {
            frequency: ManeuverSpec::DEFAULT_FREQUENCY,
            dwell: ManeuverSpec::DEFAULT_DWELL,
            amplitudes_deg: (1..=16).map(|i| 10.0 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GovernorSection {
    pub kinds: Vec<GovernorKind>,
    pub recovery: Recovery,
    pub bank: BankId,
    pub ltr_lim: f64,
    pub delta_sw_lim_deg: f64,
    pub horizon: usize,
    pub epsilon: f64,
    pub use_disturbance: bool,
    pub depth: usize,
    pub k_l: f64,
    /// Overrides the basis pole derived from the slowest vehicle mode.
    pub alpha: Option<f64>,
}

impl Default for GovernorSection {
    fn default() -> Self {
        Self {
            kinds: vec![GovernorKind::Off, GovernorKind::Lrg(None), GovernorKind::Ecg, GovernorKind::Nrg(4)],
            recovery: Recovery::Contraction,
            bank: BankId::Rgmpl3,
            ltr_lim: 0.99,
            delta_sw_lim_deg: 180.0,
            horizon: 100,
            epsilon: 1e-3,
            use_disturbance: true,
            depth: 4,
            k_l: 1.0,
            alpha: None,
        }
    }
}

/// Relative standard deviations of the estimation error per state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma_v: f64,
    pub sigma_r: f64,
    pub sigma_p: f64,
    pub sigma_phi: f64,
}

impl NoiseSpec {
    pub fn roll(sigma: f64) -> Self {
        Self {
            sigma_phi: sigma,
            ..Self::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_v == 0.0 && self.sigma_r == 0.0 && self.sigma_p == 0.0 && self.sigma_phi == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSection,
    pub maneuver: ManeuverSection,
    pub governor: GovernorSection,
    pub noise: NoiseSpec,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Control period [s].
    pub dt: f64,
    pub lift_limit: f64,
    /// Record wall-clock solve times. Off gives byte-identical outputs.
    pub record_timing: bool,
    /// Worker threads; zero uses all cores.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            plant: PlantSection::default(),
            maneuver: ManeuverSection::default(),
            governor: GovernorSection::default(),
            noise: NoiseSpec::default(),
            seeds: vec![1],
            output_dir: PathBuf::from("out"),
            dt: 0.01,
            lift_limit: DEFAULT_LIFT_LIMIT,
            record_timing: true,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let Some(a) = self
            .maneuver
            .amplitudes_deg
            .iter()
            .find(|a| !(0.0..=180.0).contains(*a))
        {
            return bad(format!("amplitude {a} deg outside [0, 180]"));
        }
        let n = &self.noise;
        if [n.sigma_v, n.sigma_r, n.sigma_p, n.sigma_phi].iter().any(|s| !(*s >= 0.0)) {
            return bad("noise sigmas must be non-negative".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.dt > 0.0) || !(self.lift_limit > 0.0) || !(self.plant.speed > 0.0) {
            return bad("dt, lift_limit and speed must be positive".into());
        }
        let g = &self.governor;
        if !(g.ltr_lim > 0.0 && g.ltr_lim <= 1.0) {
            return bad(format!("ltr_lim {} outside (0, 1]", g.ltr_lim));
        }
        if !(g.delta_sw_lim_deg > 0.0) || g.horizon == 0 || g.depth == 0 || !(g.k_l > 0.0) {
            return bad("governor limits, horizon, depth and k_l must be positive".into());
        }
        if !(g.epsilon > 0.0 && g.epsilon < 1.0) {
            return bad(format!("epsilon {} outside (0, 1)", g.epsilon));
        }
        if let Some(a) = g.alpha {
            if !(0.0..1.0).contains(&a) {
                return bad(format!("alpha {a} outside [0, 1)"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn governor_names_round_trip() {
        for s in ["off", "lrg", "lrg-single", "lrg-rgmpl1", "ecg", "nrg1", "nrg4", "nrg20"] {
            let k: GovernorKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert!("nrg0".parse::<GovernorKind>().is_err());
        assert!("lrg-bogus".parse::<GovernorKind>().is_err());
        assert!("mpc".parse::<GovernorKind>().is_err());
    }

    #[test]
    fn default_config_round_trips_and_validates() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.maneuver.amplitudes_deg.first(), Some(&10.0));
        assert_eq!(cfg.maneuver.amplitudes_deg.last(), Some(&160.0));
    }

    #[test]
    fn partial_file_and_invalid_values() {
        let cfg = ExperimentConfig::from_toml(
            "seeds = [3, 4]\n[governor]\nkinds = [\"lrg-single\", \"nrg1\"]\n[noise]\nsigma_phi = 0.1\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.governor.kinds, vec![GovernorKind::Lrg(Some(BankId::Single)), GovernorKind::Nrg(1)]);
        assert_eq!(cfg.noise.sigma_phi, 0.1);
        assert!(ExperimentConfig::from_toml("seeds = []").is_err());
        assert!(ExperimentConfig::from_toml("[maneuver]\namplitudes_deg = [200.0]").is_err());
        assert!(ExperimentConfig::from_toml("[noise]\nsigma_phi = -0.1").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }
}
