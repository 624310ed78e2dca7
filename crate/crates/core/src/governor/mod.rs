//! Steering supervisors.
//!
//! Each governor maps the driver's steering reference and the measured state
//! to the applied steering-wheel angle once per control step.

mod bank;
mod ecg;
mod lrg;
mod nrg;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::vehicle::VehicleState;

pub use bank::GovernorBank;
pub use ecg::{ecg_qp, EcgGovernor, EcgState};
pub use lrg::{
    classify, contraction_domain, lrg_solve, recover_contraction, recover_relaxation,
    recover_row_removal, CommandRows, KInterval, LrgGovernor, LrgOutcome,
};
pub use nrg::{NrgGovernor, NrgSearch, NRG_HORIZON};

/// Recovery strategy used when the standard LRG interval is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    #[default]
    None,
    LastCommand,
    Contraction,
    RowRemoval,
    Relaxation,
}

impl Recovery {
    pub fn as_str(self) -> &'static str {
        match self {
            Recovery::None => "none",
            Recovery::LastCommand => "last_command",
            Recovery::Contraction => "contraction",
            Recovery::RowRemoval => "row_removal",
            Recovery::Relaxation => "relaxation",
        }
    }
}

/// Outcome of one governor step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GovernorDecision {
    pub reference: f64,
    /// Applied steering-wheel angle [rad].
    pub v: f64,
    /// `v != reference`.
    pub active: bool,
    /// 1 feasible, 0 no viable solution, -1..-6 see [`classify`].
    pub feasibility_level: i8,
    pub recovery_used: Recovery,
    pub rows_removed: usize,
    pub relax_epsilon: f64,
    /// Wall-clock time of the decision [s].
    pub solve_time: f64,
    /// Whether an optimisation problem was solved this step.
    pub qp_invoked: bool,
}

impl GovernorDecision {
    pub(crate) fn pass_through(reference: f64) -> Self {
        Self {
            reference,
            v: reference,
            active: false,
            feasibility_level: 1,
            recovery_used: Recovery::None,
            rows_removed: 0,
            relax_epsilon: 0.0,
            solve_time: 0.0,
            qp_invoked: false,
        }
    }

    pub(crate) fn modified(reference: f64, v: f64, level: i8) -> Self {
        Self {
            v,
            active: v != reference,
            feasibility_level: level,
            ..Self::pass_through(reference)
        }
    }
}

pub trait Governor: Send {
    fn name(&self) -> String;

    /// Decide the applied command. `state` is the governor's view of the
    /// plant and may carry estimation noise.
    fn step(&mut self, reference: f64, state: &VehicleState) -> Result<GovernorDecision>;

    /// Forget the command history.
    fn reset(&mut self);
}

/// No supervision: the reference is applied unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThrough;

impl Governor for PassThrough {
    fn name(&self) -> String {
        "off".into()
    }

    fn step(&mut self, reference: f64, _state: &VehicleState) -> Result<GovernorDecision> {
        Ok(GovernorDecision::pass_through(reference))
    }

    fn reset(&mut self) {}
}
