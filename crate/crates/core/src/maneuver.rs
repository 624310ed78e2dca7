//! Steering test maneuvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settling time appended after the waveform ends [s].
pub const SETTLE_TIME: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverKind {
    SineWithDwell,
    /// Ramp to the amplitude and hold.
    JTurn,
    /// Ramp to the amplitude, then to the opposite amplitude and hold.
    FishHook,
}

/// Steering-wheel maneuver definition. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverSpec {
    pub kind: ManeuverKind,
    /// Peak steering-wheel angle [rad].
    pub amplitude: f64,
    /// Sine frequency [Hz].
    pub frequency: f64,
    /// Hold at the second peak [s].
    pub dwell: f64,
    /// Forward speed [m/s].
    pub speed: f64,
    /// Simulated duration [s].
    pub duration: f64,
    /// Multiplier applied to the waveform (safe-reference search).
    pub amplitude_scale: f64,
}

impl ManeuverSpec {
    pub const DEFAULT_FREQUENCY: f64 = 0.7;
    pub const DEFAULT_DWELL: f64 = 0.5;
    /// 72 km/h.
    pub const DEFAULT_SPEED: f64 = 20.0;

    /// Sine with Dwell at the default frequency, dwell and speed, with a
    /// duration covering the waveform plus the settling time.
    pub fn sine_with_dwell(amplitude: f64) -> Self {
        let mut spec = Self {
            kind: ManeuverKind::SineWithDwell,
            amplitude,
            frequency: Self::DEFAULT_FREQUENCY,
            dwell: Self::DEFAULT_DWELL,
            speed: Self::DEFAULT_SPEED,
            duration: 0.0,
            amplitude_scale: 1.0,
        };
        spec.duration = spec.waveform_end() + SETTLE_TIME;
        spec
    }

    pub fn sine_with_dwell_deg(amplitude_deg: f64) -> Self {
        Self::sine_with_dwell(amplitude_deg.to_radians())
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.amplitude_scale = scale;
        self
    }

    pub fn with_speed(mut self, speed: f64) -> Self {
        self.speed = speed;
        self
    }

    /// Time at which the steering waveform returns to zero for good.
    pub fn waveform_end(&self) -> f64 {
        match self.kind {
            ManeuverKind::SineWithDwell => 1.0 / self.frequency + self.dwell,
            // Ramps complete in one quarter period; the hold lasts the dwell.
            ManeuverKind::JTurn => 0.25 / self.frequency + self.dwell,
            ManeuverKind::FishHook => 0.75 / self.frequency + self.dwell,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "maneuver amplitude must be non-negative, got {}",
                self.amplitude
            )));
        }
        if !(self.frequency > 0.0) || !(self.dwell >= 0.0) || !(self.speed > 0.0) {
            return Err(Error::InvalidInput(
                "maneuver frequency and speed must be positive, dwell non-negative".into(),
            ));
        }
        if self.duration + 1e-12 < self.waveform_end() + SETTLE_TIME {
            return Err(Error::InvalidInput(format!(
                "duration {:.3} s does not cover the waveform plus {SETTLE_TIME} s settling",
                self.duration
            )));
        }
        Ok(())
    }

    /// Reference steering-wheel angle at time `t` [rad].
    pub fn reference(&self, t: f64) -> f64 {
        let a = self.amplitude * self.amplitude_scale;
        match self.kind {
            ManeuverKind::SineWithDwell => a * sine_with_dwell_unit(self.frequency, self.dwell, t),
            ManeuverKind::JTurn => a * ramp_hold(self.frequency, self.dwell, t),
            ManeuverKind::FishHook => a * fish_hook_unit(self.frequency, self.dwell, t),
        }
    }
}

/// Unit-amplitude Sine with Dwell: one sine period at `frequency`, held at
/// the second (negative) peak for `dwell` seconds, then zero.
pub fn sine_with_dwell_unit(frequency: f64, dwell: f64, t: f64) -> f64 {
    let period = 1.0 / frequency;
    let w = 2.0 * std::f64::consts::PI * frequency;
    let peak2 = 0.75 * period;
    if t < 0.0 {
        0.0
    } else if t < peak2 {
        (w * t).sin()
    } else if t < peak2 + dwell {
        -1.0
    } else if t < period + dwell {
        (w * (t - dwell)).sin()
    } else {
        0.0
    }
}

/// Sine with Dwell reference for a maneuver spec at time `t`.
pub fn sine_with_dwell(spec: &ManeuverSpec, t: f64) -> f64 {
    spec.amplitude * spec.amplitude_scale * sine_with_dwell_unit(spec.frequency, spec.dwell, t)
}

fn ramp_hold(frequency: f64, dwell: f64, t: f64) -> f64 {
    let ramp = 0.25 / frequency;
    if t <= 0.0 {
        0.0
    } else if t < ramp {
        t / ramp
    } else if t < ramp + dwell {
        1.0
    } else {
        0.0
    }
}

fn fish_hook_unit(frequency: f64, dwell: f64, t: f64) -> f64 {
    let q = 0.25 / frequency;
    if t <= 0.0 {
        0.0
    } else if t < q {
        t / q
    } else if t < 3.0 * q {
        1.0 - (t - q) / q
    } else if t < 3.0 * q + dwell {
        -1.0
    } else {
        0.0
    }
}
