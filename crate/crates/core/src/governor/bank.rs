use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::laguerre::LaguerreBasis;
use crate::linear::{LinearModel, MplBank, Selection};
use crate::oinf::{self, AdmissibleSet, OutputConstraints};
use crate::params::VehicleParams;
use crate::vehicle::{compute_ltr, VehicleState};

/// Linear models and their admissible sets, for both steering directions.
///
/// Every set carries disturbance columns; passing a zero disturbance
/// recovers the plain set.
#[derive(Debug, Clone)]
pub struct GovernorBank {
    pub models: MplBank,
    pub yc: OutputConstraints,
    pub horizon: usize,
    pub epsilon: f64,
    mirrored: Vec<LinearModel>,
    lrg: Vec<[AdmissibleSet; 2]>,
    ecg: Option<(LaguerreBasis, Vec<[AdmissibleSet; 2]>)>,
}

/// Sampled members whose constant-command response leaves the output
/// constraints within three horizons mean the horizon is too short for
/// this model. Mirrored models behave identically, so one side suffices.
fn warn_if_undetermined(model: &LinearModel, yc: &OutputConstraints, set: &AdmissibleSet) -> Result<()> {
    const SAMPLES: usize = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let bad = oinf::finite_determination_violations(model, yc, set, SAMPLES, 3 * set.horizon, &mut rng)?;
    if bad > 0 {
        log::warn!(
            "horizon {} does not determine the set of {}: {bad}/{SAMPLES} sampled members violate later",
            set.horizon,
            set.model_id
        );
    }
    Ok(())
}

impl GovernorBank {
    pub fn build(
        models: MplBank,
        yc: OutputConstraints,
        horizon: usize,
        epsilon: f64,
    ) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidInput("governor bank needs at least one model".into()));
        }
        let mirrored: Vec<LinearModel> = models.models.iter().map(LinearModel::mirrored).collect();
        let lrg = models
            .models
            .iter()
            .zip(&mirrored)
            .map(|(pos, neg)| -> Result<[AdmissibleSet; 2]> {
                let plain = oinf::build_oinf(pos, &yc, horizon, epsilon)?;
                warn_if_undetermined(pos, &yc, &plain)?;
                Ok([
                    plain.augment_disturbance(&yc.a_y)?,
                    oinf::build_oinf(neg, &yc, horizon, epsilon)?.augment_disturbance(&yc.a_y)?,
                ])
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            models,
            yc,
            horizon,
            epsilon,
            mirrored,
            lrg,
            ecg: None,
        })
    }

    /// Add command-governor sets for `basis`.
    pub fn with_ecg(mut self, basis: LaguerreBasis) -> Result<Self> {
        let sets = self
            .models
            .models
            .iter()
            .zip(&self.mirrored)
            .map(|(pos, neg)| -> Result<[AdmissibleSet; 2]> {
                let build = |m: &LinearModel| {
                    oinf::build_ecg_oinf(m, &self.yc, &basis, self.horizon, self.epsilon)?
                        .augment_disturbance(&self.yc.a_y)
                };
                Ok([build(pos)?, build(neg)?])
            })
            .collect::<Result<_>>()?;
        self.ecg = Some((basis, sets));
        Ok(self)
    }

    pub fn select(&self, delta: f64) -> Selection {
        self.models.select(delta)
    }

    pub fn model(&self, sel: Selection) -> &LinearModel {
        if sel.mirrored {
            &self.mirrored[sel.index]
        } else {
            &self.models.models[sel.index]
        }
    }

    pub fn lrg_set(&self, sel: Selection) -> &AdmissibleSet {
        &self.lrg[sel.index][sel.mirrored as usize]
    }

    pub fn ecg_basis(&self) -> Option<&LaguerreBasis> {
        self.ecg.as_ref().map(|(b, _)| b)
    }

    pub fn ecg_set(&self, sel: Selection) -> Option<&AdmissibleSet> {
        self.ecg.as_ref().map(|(_, s)| &s[sel.index][sel.mirrored as usize])
    }

    /// Measured-minus-predicted output at the current state. The steering
    /// row is exact in the linear model, so only the LTR entry can differ.
    pub fn nonlinear_difference(
        model: &LinearModel,
        state: &VehicleState,
        params: &VehicleParams,
    ) -> DVector<f64> {
        let dx = model.deviation(state);
        let predicted = model.y0[0] + (model.c.row(0) * dx)[(0, 0)];
        DVector::from_column_slice(&[compute_ltr(state, params) - predicted, 0.0])
    }
}
