//! Physical constants of the plant: chassis/suspension parameters and
//! Magic Formula tire coefficients.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gravitational acceleration [m/s^2].
pub const G: f64 = 9.81;

/// Chassis, suspension and steering parameters of the roll-augmented
/// single-track model. Field names on disk follow the usual symbol names
/// (`l_f`, `h_SM`, `K_s`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// CM to front axle [m].
    pub l_f: f64,
    /// CM to rear axle [m].
    pub l_r: f64,
    /// Track width used by the load-transfer ratio and wheel-lift geometry [m].
    #[serde(rename = "T")]
    pub track: f64,
    /// Sprung-mass CM height above the roll axis [m].
    #[serde(rename = "h_SM")]
    pub h_sm: f64,
    /// Undercarriage CM height [m].
    #[serde(rename = "h_UC")]
    pub h_uc: f64,
    pub m: f64,
    #[serde(rename = "m_SM")]
    pub m_sm: f64,
    #[serde(rename = "m_UC")]
    pub m_uc: f64,
    #[serde(rename = "I_xx_SM")]
    pub i_xx_sm: f64,
    #[serde(rename = "I_xx_UC")]
    pub i_xx_uc: f64,
    #[serde(rename = "I_yy_SM")]
    pub i_yy_sm: f64,
    #[serde(rename = "I_zz")]
    pub i_zz: f64,
    #[serde(rename = "I_xz_SM")]
    pub i_xz_sm: f64,
    /// Steering-wheel to road-wheel angle ratio.
    #[serde(rename = "k_deltaSW")]
    pub k_delta_sw: f64,
    /// Suspension roll stiffness [N m/rad].
    #[serde(rename = "K_s")]
    pub k_s: f64,
    /// Suspension roll damping [N m s/rad].
    #[serde(rename = "D_s")]
    pub d_s: f64,
    /// Differential roll stiffness factor.
    #[serde(default)]
    pub dk_ss: f64,
    /// Differential roll damping factor.
    #[serde(default)]
    pub dd_ss: f64,
}

impl Default for VehicleParams {
    /// North-American SUV parameter set.
    fn default() -> Self {
        Self {
            l_f: 1.160,
            l_r: 1.750,
            track: 1.260,
            h_sm: 0.780,
            h_uc: 0.0,
            m: 2000.0,
            m_sm: 1700.0,
            m_uc: 300.0,
            i_xx_sm: 1280.0,
            i_xx_uc: 202.0,
            i_yy_sm: 2800.0,
            i_zz: 2800.0,
            i_xz_sm: 0.0,
            k_delta_sw: 17.5,
            k_s: 73991.0,
            d_s: 5993.0,
            dk_ss: 0.0,
            dd_ss: 0.0,
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be strictly positive, got {value}"),
        })
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    /// Static vertical load on the (front, rear) axle [N].
    pub fn axle_loads(&self) -> (f64, f64) {
        let w = self.m * G;
        let l = self.wheelbase();
        (w * self.l_r / l, w * self.l_f / l)
    }

    pub fn validate(&self) -> Result<()> {
        positive("l_f", self.l_f)?;
        positive("l_r", self.l_r)?;
        positive("T", self.track)?;
        positive("h_SM", self.h_sm)?;
        positive("m", self.m)?;
        positive("m_SM", self.m_sm)?;
        positive("m_UC", self.m_uc)?;
        positive("I_xx_SM", self.i_xx_sm)?;
        positive("I_xx_UC", self.i_xx_uc)?;
        positive("I_yy_SM", self.i_yy_sm)?;
        positive("I_zz", self.i_zz)?;
        positive("K_s", self.k_s)?;
        positive("D_s", self.d_s)?;
        if !(self.h_uc.is_finite() && self.h_uc >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "h_UC",
                reason: format!("must be non-negative, got {}", self.h_uc),
            });
        }
        if ((self.m_sm + self.m_uc) - self.m).abs() > 1e-9 * self.m {
            return Err(Error::InvalidParameter {
                name: "m",
                reason: format!(
                    "m = {} does not equal m_SM + m_UC = {}",
                    self.m,
                    self.m_sm + self.m_uc
                ),
            });
        }
        if !(self.k_delta_sw > 1.0) {
            return Err(Error::InvalidParameter {
                name: "k_deltaSW",
                reason: format!("steering ratio must exceed 1, got {}", self.k_delta_sw),
            });
        }
        for (name, v) in [("dk_ss", self.dk_ss), ("dd_ss", self.dd_ss)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must lie in [0, 1), got {v}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surface {
    Dry,
    Wet,
    Snow,
    Ice,
}

/// Magic Formula shape coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TireParams {
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub c2: f64,
    pub surface: Surface,
}

impl TireParams {
    pub fn for_surface(surface: Surface) -> Self {
        let (b, c, d, e, c2) = match surface {
            Surface::Dry => (7.15, 2.30, 0.87, 1.00, 1.54),
            Surface::Wet => (9.00, 2.50, 0.72, 1.00, 1.54),
            Surface::Snow => (5.00, 2.00, 0.30, 1.00, 1.54),
            Surface::Ice => (4.00, 2.00, 0.10, 1.00, 1.54),
        };
        Self { b, c, d, e, c2, surface }
    }

    pub fn validate(&self) -> Result<()> {
        positive("B", self.b)?;
        positive("C", self.c)?;
        positive("D", self.d)?;
        positive("c2", self.c2)?;
        if !(self.e.is_finite() && self.e <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "E",
                reason: format!("must be <= 1, got {}", self.e),
            });
        }
        Ok(())
    }
}

impl Default for TireParams {
    fn default() -> Self {
        Self::for_surface(Surface::Dry)
    }
}

/// On-disk parameter file: a `[vehicle]` table and a `[tire]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PlantParamsFile {
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub tire: TireParams,
}

impl PlantParamsFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let parsed: Self = toml::from_str(text)?;
        parsed.vehicle.validate()?;
        parsed.tire.validate()?;
        Ok(parsed)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        VehicleParams::default().validate().unwrap();
        for s in [Surface::Dry, Surface::Wet, Surface::Snow, Surface::Ice] {
            TireParams::for_surface(s).validate().unwrap();
        }
    }

    #[test]
    fn mass_mismatch_rejected() {
        let p = VehicleParams {
            m_uc: 310.0,
            ..VehicleParams::default()
        };
        assert!(matches!(p.validate(), Err(Error::InvalidParameter { name: "m", .. })));
    }

    #[test]
    fn steering_ratio_must_exceed_one() {
        let p = VehicleParams {
            k_delta_sw: 1.0,
            ..VehicleParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn toml_round_trip_keeps_symbol_names() {
        let file = PlantParamsFile::default();
        let text = file.to_toml().unwrap();
        assert!(text.contains("h_SM"));
        assert!(text.contains("K_s"));
        let back = PlantParamsFile::from_toml(&text).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn partial_file_falls_back_to_defaults() {
        let back = PlantParamsFile::from_toml("[tire]\nB = 9.0\nC = 2.5\nD = 0.72\nE = 1.0\nc2 = 1.54\nsurface = \"wet\"\n").unwrap();
        assert_eq!(back.tire, TireParams::for_surface(Surface::Wet));
        assert_eq!(back.vehicle, VehicleParams::default());
    }
}
