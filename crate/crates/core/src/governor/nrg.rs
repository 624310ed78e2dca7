//! Nonlinear reference governor: forward simulation of the full plant with
//! bisection on the command.

use std::time::Instant;

use super::{GovernorDecision, Governor, Recovery};
use crate::error::Result;
use crate::oinf::OutputConstraints;
use crate::vehicle::{compute_ltr, Vehicle, VehicleState};

/// Prediction horizon [s].
pub const NRG_HORIZON: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NrgSearch {
    pub v: f64,
    pub simulations: usize,
    /// `v` passed a simulation; false when falling back to the last command.
    pub verified: bool,
}

#[derive(Debug, Clone)]
pub struct NrgGovernor {
    vehicle: Vehicle,
    ltr_lim: f64,
    delta_sw_lim: f64,
    pub horizon: f64,
    pub dt: f64,
    pub iters: usize,
    prev_v: f64,
}

impl NrgGovernor {
    pub fn new(vehicle: Vehicle, yc: &OutputConstraints, iters: usize, dt: f64) -> Self {
        Self {
            vehicle,
            ltr_lim: yc.ltr_lim,
            delta_sw_lim: yc.delta_sw_lim,
            horizon: NRG_HORIZON,
            dt,
            iters: iters.max(1),
            prev_v: 0.0,
        }
    }

    /// Whether holding `command` from `state` keeps the outputs inside the
    /// limits at every sample of the horizon. Integration failures count as
    /// unsafe.
    pub fn is_safe(&self, state: &VehicleState, command: f64) -> bool {
        if command.abs() > self.delta_sw_lim {
            return false;
        }
        let steps = (self.horizon / self.dt).round() as usize;
        let mut s = *state;
        for _ in 0..steps {
            if self.vehicle.advance(&mut s, command, self.dt, 0.0).is_err() {
                return false;
            }
            if s.liftoff() || compute_ltr(&s, &self.vehicle.params).abs() > self.ltr_lim {
                return false;
            }
        }
        true
    }

    /// Bisection between `prev_v` and `reference`, keeping the last safe
    /// candidate.
    pub fn search(&self, reference: f64, state: &VehicleState, prev_v: f64) -> NrgSearch {
        if self.is_safe(state, reference) {
            return NrgSearch {
                v: reference,
                simulations: 1,
                verified: true,
            };
        }
        let (mut safe, mut unsafe_) = (prev_v, reference);
        let mut verified = false;
        for _ in 1..self.iters {
            let mid = 0.5 * (safe + unsafe_);
            if self.is_safe(state, mid) {
                safe = mid;
                verified = true;
            } else {
                unsafe_ = mid;
            }
        }
        NrgSearch {
            v: safe,
            simulations: self.iters,
            verified,
        }
    }

    pub fn prev_v(&self) -> f64 {
        self.prev_v
    }
}

impl Governor for NrgGovernor {
    fn name(&self) -> String {
        format!("nrg{}", self.iters)
    }

    fn step(&mut self, reference: f64, state: &VehicleState) -> Result<GovernorDecision> {
        let start = Instant::now();
        let found = self.search(reference, state, self.prev_v);
        self.prev_v = found.v;
        let (level, recovery) = if found.verified {
            (1, Recovery::None)
        } else {
            (0, Recovery::LastCommand)
        };
        Ok(GovernorDecision {
            recovery_used: recovery,
            solve_time: start.elapsed().as_secs_f64(),
            ..GovernorDecision::modified(reference, found.v, level)
        })
    }

    fn reset(&mut self) {
        self.prev_v = 0.0;
    }
}
