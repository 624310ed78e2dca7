//! Scalar reference governor with exact interval search.
//!
//! With the state and disturbance fixed, every row of the admissible set is
//! affine in the applied command `v`, and therefore in the gain `k` of
//! `v = prev_v + k (ref - prev_v)`. The feasible gains form one interval,
//! computed row by row.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;

use super::{GovernorBank, GovernorDecision, Governor, Recovery};
use crate::error::Result;
use crate::oinf::AdmissibleSet;
use crate::params::VehicleParams;
use crate::vehicle::VehicleState;

const RELAX_START: f64 = 1e-3;
const RELAX_MAX_DOUBLINGS: usize = 40;
const RELAX_BISECTIONS: usize = 20;

/// Rows `g_i v <= (1 + eps) b_i + base_i` of a set restricted to the
/// current state and disturbance.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandRows {
    pub g: Vec<f64>,
    pub base: Vec<f64>,
    pub b: Vec<f64>,
    pub block_rows: usize,
}

/// Gains admitted by a group of rows, over the whole real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KInterval {
    pub lo: f64,
    pub hi: f64,
    /// A row independent of `k` is violated.
    pub blocked: bool,
}

impl KInterval {
    pub fn level(&self) -> i8 {
        classify(self)
    }

    /// Largest admissible gain in `[0, 1]`, if any.
    pub fn k_max(&self) -> Option<f64> {
        (self.level() == 1).then(|| self.hi.min(1.0))
    }
}

/// Feasibility level of a gain interval.
///
/// `1` when some `k` in `[0, 1]` is admissible. Otherwise `-1` when the rows
/// need `k > 1`, `-2` when they need `k < 0`, and `-3` when they need both
/// or otherwise conflict. A violated row that no `k` can influence gives `0`
/// on its own, and shifts `-1..-3` to `-4..-6`.
pub fn classify(iv: &KInterval) -> i8 {
    let need_above = iv.lo > 1.0;
    let need_below = iv.hi < 0.0;
    let conflict = iv.lo > iv.hi;
    let base = if need_above && !need_below && !conflict {
        -1
    } else if need_below && !need_above && !conflict {
        -2
    } else if need_above || need_below || conflict {
        -3
    } else {
        1
    };
    match (iv.blocked, base) {
        (false, b) => b,
        (true, 1) => 0,
        (true, b) => b - 3,
    }
}

impl CommandRows {
    /// Restrict `set` to fixed state and disturbance parts.
    pub fn new(set: &AdmissibleSet, delta0: f64, state: &DVector<f64>, dist: &DVector<f64>) -> Self {
        let rest = set.a.columns(set.n_cmd, set.n_state) * state
            + if set.n_dist > 0 {
                set.a.columns(set.n_cmd + set.n_state, set.n_dist) * dist
            } else {
                DVector::zeros(set.rows())
            };
        let g: Vec<f64> = set.a.column(0).iter().copied().collect();
        let base = g.iter().zip(rest.iter()).map(|(g, r)| g * delta0 - r).collect();
        Self {
            g,
            base,
            b: set.b.iter().copied().collect(),
            block_rows: set.block_rows,
        }
    }

    pub fn from_parts(g: Vec<f64>, base: Vec<f64>, b: Vec<f64>, block_rows: usize) -> Self {
        assert!(g.len() == base.len() && g.len() == b.len() && block_rows > 0);
        Self {
            g,
            base,
            b,
            block_rows,
        }
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn blocks(&self) -> usize {
        self.len() / self.block_rows
    }

    fn rhs(&self, i: usize, eps: f64) -> f64 {
        (1.0 + eps) * self.b[i] + self.base[i]
    }

    pub fn admits(&self, v: f64, eps: f64) -> bool {
        (0..self.len()).all(|i| self.g[i] * v <= self.rhs(i, eps))
    }

    /// Admissible gains using rows from `from_row` on.
    pub fn k_interval(&self, reference: f64, prev_v: f64, from_row: usize, eps: f64) -> KInterval {
        let step = reference - prev_v;
        let mut iv = KInterval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            blocked: false,
        };
        for i in from_row..self.len() {
            let c = self.g[i] * step;
            let r = self.rhs(i, eps) - self.g[i] * prev_v;
            if c > 0.0 {
                iv.hi = iv.hi.min(r / c);
            } else if c < 0.0 {
                iv.lo = iv.lo.max(r / c);
            } else if r < 0.0 {
                iv.blocked = true;
            }
        }
        iv
    }

    /// Admissible commands: `(lo, hi)`, or `None` when a row independent of
    /// `v` is violated.
    pub fn v_interval(&self, from_row: usize, eps: f64) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in from_row..self.len() {
            let (g, r) = (self.g[i], self.rhs(i, eps));
            if g > 0.0 {
                hi = hi.min(r / g);
            } else if g < 0.0 {
                lo = lo.max(r / g);
            } else if r < 0.0 {
                return None;
            }
        }
        Some((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrgOutcome {
    pub v: f64,
    pub level: i8,
    pub recovery_used: Recovery,
    pub rows_removed: usize,
    pub relax_epsilon: f64,
}

fn apply_gain(reference: f64, prev_v: f64, k: f64) -> f64 {
    if k >= 1.0 {
        reference
    } else {
        prev_v + k * (reference - prev_v)
    }
}

/// Standard LRG update with `recovery` when the gain interval is empty.
pub fn lrg_solve(rows: &CommandRows, reference: f64, prev_v: f64, recovery: Recovery) -> LrgOutcome {
    let iv = rows.k_interval(reference, prev_v, 0, 0.0);
    let level = iv.level();
    let mut out = LrgOutcome {
        v: prev_v,
        level,
        recovery_used: Recovery::None,
        rows_removed: 0,
        relax_epsilon: 0.0,
    };
    if let Some(k) = iv.k_max() {
        out.v = apply_gain(reference, prev_v, k);
        return out;
    }
    out.recovery_used = Recovery::LastCommand;
    match recovery {
        Recovery::None | Recovery::LastCommand => {}
        Recovery::Contraction => {
            if let Some(v) = recover_contraction(rows, reference, prev_v) {
                out.v = v;
                out.recovery_used = Recovery::Contraction;
            }
        }
        Recovery::RowRemoval => {
            let (v, removed) = recover_row_removal(rows, reference, prev_v);
            out.rows_removed = removed;
            if let Some(v) = v {
                out.v = v;
                out.recovery_used = Recovery::RowRemoval;
            }
        }
        Recovery::Relaxation => {
            if let Some((v, eps)) = recover_relaxation(rows, reference, prev_v) {
                out.v = v;
                out.relax_epsilon = eps;
                out.recovery_used = Recovery::Relaxation;
            }
        }
    }
    out
}

/// Search domain for contraction: commands between zero and the larger
/// magnitude when `prev_v` and `reference` share a sign, else between them.
pub fn contraction_domain(reference: f64, prev_v: f64) -> (f64, f64) {
    if prev_v >= 0.0 && reference >= 0.0 {
        (0.0, prev_v.max(reference))
    } else if prev_v <= 0.0 && reference <= 0.0 {
        (prev_v.min(reference), 0.0)
    } else {
        (prev_v.min(reference), prev_v.max(reference))
    }
}

/// Admissible command in the contraction domain closest to `reference`.
pub fn recover_contraction(rows: &CommandRows, reference: f64, prev_v: f64) -> Option<f64> {
    let (lo, hi) = rows.v_interval(0, 0.0)?;
    let (s_lo, s_hi) = contraction_domain(reference, prev_v);
    let (lo, hi) = (lo.max(s_lo), hi.min(s_hi));
    (lo <= hi).then(|| reference.clamp(lo, hi))
}

/// Drop leading prediction blocks until the gain interval is non-empty. The
/// steady-state block is never dropped. Returns the command, if found, and
/// the number of rows dropped.
pub fn recover_row_removal(rows: &CommandRows, reference: f64, prev_v: f64) -> (Option<f64>, usize) {
    let l = rows.block_rows;
    let last = rows.blocks().saturating_sub(1);
    for i in 1..=last {
        let iv = rows.k_interval(reference, prev_v, i * l, 0.0);
        if let Some(k) = iv.k_max() {
            return (Some(apply_gain(reference, prev_v, k)), i * l);
        }
    }
    (None, last * l)
}

/// Inflate the bounds by the smallest `(1 + eps)` that restores a gain.
pub fn recover_relaxation(rows: &CommandRows, reference: f64, prev_v: f64) -> Option<(f64, f64)> {
    let feasible = |eps: f64| rows.k_interval(reference, prev_v, 0, eps).k_max().is_some();
    let mut lo = 0.0;
    let mut hi = RELAX_START;
    let mut found = false;
    for _ in 0..RELAX_MAX_DOUBLINGS {
        if feasible(hi) {
            found = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !found {
        return None;
    }
    for _ in 0..RELAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let k = rows.k_interval(reference, prev_v, 0, hi).k_max()?;
    Some((apply_gain(reference, prev_v, k), hi))
}

/// LRG over a multi-point bank, selecting the model nearest the previous
/// command.
#[derive(Debug, Clone)]
pub struct LrgGovernor {
    bank: Arc<GovernorBank>,
    params: VehicleParams,
    pub recovery: Recovery,
    /// Compensate the gap between measured and predicted output.
    pub use_disturbance: bool,
    label: String,
    prev_v: f64,
}

impl LrgGovernor {
    pub fn new(
        bank: Arc<GovernorBank>,
        params: VehicleParams,
        recovery: Recovery,
        use_disturbance: bool,
    ) -> Self {
        Self {
            bank,
            params,
            recovery,
            use_disturbance,
            label: "lrg".into(),
            prev_v: 0.0,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn prev_v(&self) -> f64 {
        self.prev_v
    }

    /// Rows of the selected set at `state`, together with the set itself.
    pub fn rows_at(&self, state: &VehicleState) -> (CommandRows, &AdmissibleSet) {
        let sel = self.bank.select(self.prev_v);
        let model = self.bank.model(sel);
        let set = self.bank.lrg_set(sel);
        let dx = model.deviation(state);
        let d = if self.use_disturbance {
            GovernorBank::nonlinear_difference(model, state, &self.params)
        } else {
            DVector::zeros(2)
        };
        (CommandRows::new(set, model.delta0, &dx, &d), set)
    }
}

impl Governor for LrgGovernor {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn step(&mut self, reference: f64, state: &VehicleState) -> Result<GovernorDecision> {
        let start = Instant::now();
        let (rows, _) = self.rows_at(state);
        let out = lrg_solve(&rows, reference, self.prev_v, self.recovery);
        self.prev_v = out.v;
        Ok(GovernorDecision {
            recovery_used: out.recovery_used,
            rows_removed: out.rows_removed,
            relax_epsilon: out.relax_epsilon,
            solve_time: start.elapsed().as_secs_f64(),
            ..GovernorDecision::modified(reference, out.v, out.level)
        })
    }

    fn reset(&mut self) {
        self.prev_v = 0.0;
    }
}
