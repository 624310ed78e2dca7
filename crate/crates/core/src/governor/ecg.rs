//! Extended command governor.
//!
//! The applied command is `v = C̄ x̄ + rho`, where the virtual state `x̄`
//! decays along `x̄+ = Ā x̄`. The QP only runs when the raw reference fails
//! the plain admissibility test.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{contraction_domain, CommandRows, GovernorBank, GovernorDecision, Governor, Recovery};
use crate::error::{Error, Result};
use crate::laguerre::{EcgWeights, LaguerreBasis};
use crate::linear::LinearModel;
use crate::oinf::AdmissibleSet;
use crate::params::VehicleParams;
use crate::qp::{self, QpSolution};
use crate::vehicle::VehicleState;

/// Virtual state and offset of the last computed command sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgState {
    pub xbar: DVector<f64>,
    pub rho: f64,
}

impl EcgState {
    pub fn reset(depth: usize, rho: f64) -> Self {
        Self {
            xbar: DVector::zeros(depth),
            rho,
        }
    }

    pub fn command(&self, basis: &LaguerreBasis) -> f64 {
        (basis.c_bar() * &self.xbar)[(0, 0)] + self.rho
    }

    /// Continue the stored sequence by one step with `rho` held.
    pub fn advance(&self, basis: &LaguerreBasis) -> Self {
        Self {
            xbar: basis.a_bar() * &self.xbar,
            rho: self.rho,
        }
    }
}

/// Solve the command-governor QP over `(x̄, rho)` at state deviation `dx`
/// and disturbance `d`. With `domain`, both the first command and `rho` are
/// kept inside `[lo, hi]`.
#[allow(clippy::too_many_arguments)]
pub fn ecg_qp(
    set: &AdmissibleSet,
    model: &LinearModel,
    dx: &DVector<f64>,
    d: &DVector<f64>,
    basis: &LaguerreBasis,
    weights: &EcgWeights,
    reference: f64,
    domain: Option<(f64, f64)>,
) -> Result<(EcgState, QpSolution)> {
    let n = model.a.nrows();
    let q = basis.depth;
    if set.n_state != n + q || set.n_cmd != 1 {
        return Err(Error::DimensionMismatch {
            expected: n + q,
            got: set.n_state,
        });
    }
    let rows = set.rows();
    let mut a = DMatrix::zeros(rows, q + 1);
    a.columns_mut(0, q).copy_from(&set.a.columns(1 + n, q));
    a.set_column(q, &set.a.column(0));
    let mut b = &set.b - set.a.columns(1, n) * dx + set.a.column(0) * model.delta0;
    if set.n_dist > 0 {
        b -= set.a.columns(1 + n + q, set.n_dist) * d;
    }
    if let Some((lo, hi)) = domain {
        // Rows for v0 = C̄ x̄ + rho and for rho alone, each bounded both ways.
        let mut first = DVector::zeros(q + 1);
        first.rows_mut(0, q).copy_from(&basis.c_bar().row(0).transpose());
        first[q] = 1.0;
        let mut steady = DVector::zeros(q + 1);
        steady[q] = 1.0;
        let extra = [(&first, 1.0, hi), (&first, -1.0, -lo), (&steady, 1.0, hi), (&steady, -1.0, -lo)];
        let mut a_ext = DMatrix::zeros(rows + extra.len(), q + 1);
        a_ext.rows_mut(0, rows).copy_from(&a);
        let mut b_ext = DVector::zeros(rows + extra.len());
        b_ext.rows_mut(0, rows).copy_from(&b);
        for (i, (row, sign, bound)) in extra.iter().enumerate() {
            a_ext.set_row(rows + i, &(*row * *sign).transpose());
            b_ext[rows + i] = *bound;
        }
        a = a_ext;
        b = b_ext;
    }
    let mut h = DMatrix::zeros(q + 1, q + 1);
    h.view_mut((0, 0), (q, q)).copy_from(&weights.p);
    h[(q, q)] = weights.k_l;
    let mut f = DVector::zeros(q + 1);
    f[q] = -weights.k_l * reference;
    let sol = qp::solve_qp(&h, &f, &a, &b)?;
    let state = EcgState {
        xbar: sol.x.rows(0, q).into_owned(),
        rho: sol.x[q],
    };
    Ok((state, sol))
}

#[derive(Debug, Clone)]
pub struct EcgGovernor {
    bank: Arc<GovernorBank>,
    params: VehicleParams,
    basis: LaguerreBasis,
    weights: EcgWeights,
    pub use_disturbance: bool,
    state: EcgState,
    prev_v: f64,
    qp_calls: usize,
}

impl EcgGovernor {
    /// `bank` must carry command-governor sets.
    pub fn new(bank: Arc<GovernorBank>, params: VehicleParams, k_l: f64, use_disturbance: bool) -> Result<Self> {
        let basis = *bank
            .ecg_basis()
            .ok_or_else(|| Error::InvalidInput("bank has no command-governor sets".into()))?;
        let weights = EcgWeights::new(&basis, k_l)?;
        Ok(Self {
            bank,
            params,
            basis,
            weights,
            use_disturbance,
            state: EcgState::reset(basis.depth, 0.0),
            prev_v: 0.0,
            qp_calls: 0,
        })
    }

    pub fn basis(&self) -> &LaguerreBasis {
        &self.basis
    }

    pub fn state(&self) -> &EcgState {
        &self.state
    }

    pub fn qp_calls(&self) -> usize {
        self.qp_calls
    }
}

impl Governor for EcgGovernor {
    fn name(&self) -> String {
        "ecg".into()
    }

    fn step(&mut self, reference: f64, state: &VehicleState) -> Result<GovernorDecision> {
        let start = Instant::now();
        let sel = self.bank.select(self.prev_v);
        let model = self.bank.model(sel);
        let dx = model.deviation(state);
        let d = if self.use_disturbance {
            GovernorBank::nonlinear_difference(model, state, &self.params)
        } else {
            DVector::zeros(2)
        };
        let plain = CommandRows::new(self.bank.lrg_set(sel), model.delta0, &dx, &d);
        let mut decision = if plain.admits(reference, 0.0) {
            self.state = EcgState::reset(self.basis.depth, reference);
            GovernorDecision::pass_through(reference)
        } else {
            self.qp_calls += 1;
            let set = self
                .bank
                .ecg_set(sel)
                .ok_or_else(|| Error::InvalidInput("bank has no command-governor sets".into()))?;
            let domain = contraction_domain(reference, self.prev_v);
            let solved = ecg_qp(set, model, &dx, &d, &self.basis, &self.weights, reference, Some(domain));
            let (next, level, recovery) = match solved {
                Ok((s, _)) => (s, 1, Recovery::None),
                Err(Error::QpInfeasible | Error::QpIterationLimit(_) | Error::Singular(_)) => {
                    (self.state.advance(&self.basis), 0, Recovery::LastCommand)
                }
                Err(e) => return Err(e),
            };
            self.state = next;
            let v = self.state.command(&self.basis);
            GovernorDecision {
                recovery_used: recovery,
                qp_invoked: true,
                ..GovernorDecision::modified(reference, v, level)
            }
        };
        self.prev_v = decision.v;
        decision.solve_time = start.elapsed().as_secs_f64();
        Ok(decision)
    }

    fn reset(&mut self) {
        self.state = EcgState::reset(self.basis.depth, 0.0);
        self.prev_v = 0.0;
        self.qp_calls = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{discretize, linearize, MplBank};
    use crate::oinf::OutputConstraints;
    use crate::params::TireParams;
    use crate::vehicle::PlantConfig;

    fn governor() -> EcgGovernor {
        let (p, t, c) = (VehicleParams::default(), TireParams::default(), PlantConfig::default());
        let m = discretize(&linearize(&p, &t, &c, 20.0, 0.0).unwrap(), 0.01).unwrap();
        let bank = GovernorBank::build(
            MplBank::from_models(vec![m]).unwrap(),
            OutputConstraints::new(0.99, std::f64::consts::PI).unwrap(),
            100,
            1e-3,
        )
        .unwrap()
        .with_ecg(LaguerreBasis::new(0.95, 4).unwrap())
        .unwrap();
        EcgGovernor::new(Arc::new(bank), p, 1.0, true).unwrap()
    }

    #[test]
    fn safe_reference_skips_qp() {
        let mut g = governor();
        let s = VehicleState::straight(20.0);
        let dec = g.step(0.2, &s).unwrap();
        assert_eq!(dec.v, 0.2);
        assert!(!dec.active && !dec.qp_invoked);
        assert_eq!(g.qp_calls(), 0);
        assert_eq!(g.state().rho, 0.2);
        assert_eq!(g.state().xbar.amax(), 0.0);
    }

    #[test]
    fn unconstrained_optimum_is_reference() {
        let g = governor();
        let sel = g.bank.select(0.0);
        let model = g.bank.model(sel);
        let set = g.bank.ecg_set(sel).unwrap();
        let (s, sol) = ecg_qp(set, model, &DVector::zeros(4), &DVector::zeros(2), &g.basis, &g.weights, 0.3, None).unwrap();
        assert!(sol.active.is_empty());
        assert!((s.rho - 0.3).abs() < 1e-14);
        assert!(s.xbar.amax() < 1e-14);
    }

    #[test]
    fn large_reference_is_governed_within_set() {
        let mut g = governor();
        let s = VehicleState::straight(20.0);
        let reference = 4.0;
        let dec = g.step(reference, &s).unwrap();
        assert!(dec.qp_invoked && dec.active);
        assert_eq!(dec.feasibility_level, 1);
        assert!(dec.v < reference && dec.v > 0.0);
        let sel = g.bank.select(0.0);
        let set = g.bank.ecg_set(sel).unwrap();
        let mut xs = vec![0.0; 4];
        xs.extend(g.state().xbar.iter());
        let z = set.point(&[g.state().rho], &xs, &[0.0, 0.0]).unwrap();
        assert!(set.row_margins(&z).unwrap().min() >= -1e-9);
    }

    #[test]
    fn domain_bounds_first_command_and_offset() {
        let g = governor();
        let sel = g.bank.select(0.0);
        let model = g.bank.model(sel);
        let set = g.bank.ecg_set(sel).unwrap();
        let (s, _) = ecg_qp(
            set,
            model,
            &DVector::zeros(4),
            &DVector::zeros(2),
            &g.basis,
            &g.weights,
            0.3,
            Some((0.0, 0.1)),
        )
        .unwrap();
        assert!(s.rho <= 0.1 + 1e-12 && s.rho >= -1e-12);
        let v0 = s.command(&g.basis);
        assert!((-1e-12..=0.1 + 1e-12).contains(&v0));
        assert!((s.rho - 0.1).abs() < 1e-9);
    }

    #[test]
    fn frozen_rollout_matches_powers() {
        let basis = LaguerreBasis::new(0.6, 4).unwrap();
        let x0 = DVector::from_column_slice(&[0.3, -0.2, 0.1, 0.05]);
        let mut s = EcgState {
            xbar: x0.clone(),
            rho: 0.7,
        };
        let a = basis.a_bar();
        let mut power = DMatrix::identity(4, 4);
        for _ in 0..5 {
            s = s.advance(&basis);
            power = &a * power;
            let expected = (basis.c_bar() * &power * &x0)[(0, 0)] + 0.7;
            assert!((s.command(&basis) - expected).abs() < 1e-15);
        }
    }
}
