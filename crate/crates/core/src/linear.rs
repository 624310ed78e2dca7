//! Linearised prediction models and the multi-point linearisation bank.
//!
//! Models act on deviations from a steady-turn trim. The state is
//! `(v, r, p, phi)`, the input is the steering-wheel angle and the outputs
//! are `(LTR, delta_SW)`:
//!
//! ```text
//! x+ = A x + B u,    y = y0 + C x + D u
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::params::{TireParams, VehicleParams, G};
use crate::vehicle::{
    compute_ltr, derivatives_with, tire_load_transfer, tire_resultants, PlantConfig, SpeedMode,
    VehicleState,
};

pub const N_STATES: usize = 4;
pub const N_OUTPUTS: usize = 2;

// Operating points in degrees of steering-wheel angle.

/// Straight running only (single-point linearisation).
pub const BANK_SINGLE: &[f64] = &[0.0];
pub const BANK_COARSE: &[f64] = &[0.0, 20.0, 40.0, 80.0, 130.0];
pub const BANK_RGMPL1: &[f64] = &[0.0, 20.0, 40.0, 100.0];
pub const BANK_RGMPL2: &[f64] = &[0.0, 80.0, 110.0, 150.0];
/// Default ten-point bank.
pub const BANK_RGMPL3: &[f64] = &[0.0, 20.0, 40.0, 60.0, 80.0, 100.0, 120.0, 130.0, 140.0, 150.0];

/// Linearisation about a steady turn.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// Trim lateral state `(v, r, p, phi)`.
    pub x0: [f64; N_STATES],
    /// Trim steering-wheel angle [rad].
    pub delta0: f64,
    /// Outputs `(LTR, delta_SW)` at the trim.
    pub y0: [f64; N_OUTPUTS],
    /// Forward speed of the trim [m/s].
    pub speed: f64,
    /// Sample time when discrete.
    pub dt: Option<f64>,
}

impl LinearModel {
    pub fn is_discrete(&self) -> bool {
        self.dt.is_some()
    }

    /// Deviation of a plant state from the trim.
    pub fn deviation(&self, state: &VehicleState) -> DVector<f64> {
        let x = state.lateral();
        DVector::from_fn(N_STATES, |i, _| x[i] - self.x0[i])
    }

    /// Output prediction for state deviation `dx` and input deviation `du`.
    pub fn output(&self, dx: &DVector<f64>, du: f64) -> DVector<f64> {
        let y0 = DVector::from_column_slice(&self.y0);
        y0 + &self.c * dx + &self.d * du
    }

    /// Steady-state gain from input deviation to state deviation.
    ///
    /// `-A^-1 B` in continuous time, `(I - A)^-1 B` in discrete time.
    pub fn steady_state_gain(&self) -> Result<DVector<f64>> {
        let n = self.a.nrows();
        let (m, rhs) = if self.is_discrete() {
            (DMatrix::identity(n, n) - &self.a, self.b.clone())
        } else {
            (self.a.clone(), -&self.b)
        };
        let sol = m.lu().solve(&rhs).ok_or(Error::Singular("steady-state gain"))?;
        Ok(sol.column(0).into_owned())
    }

    /// Time constant of the slowest stable continuous pole [s].
    pub fn slowest_time_constant(&self) -> Result<f64> {
        if self.is_discrete() {
            return Err(Error::InvalidInput("time constant needs a continuous model".into()));
        }
        linalg::eigenvalues(&self.a)
            .into_iter()
            .filter(|(re, _)| *re < 0.0)
            .map(|(re, im)| 1.0 / re.hypot(im))
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))))
            .ok_or(Error::InvalidInput("no stable poles".into()))
    }

    /// Operating point mirrored through the origin. The plant is odd in
    /// `(x, delta)`, so the matrices carry over unchanged.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.x0 = self.x0.map(|x| -x);
        out.y0 = self.y0.map(|y| -y);
        out.delta0 = -self.delta0;
        out
    }
}

/// Steady turn: lateral state with `v' = r' = p' = 0` and `p = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trim {
    pub state: VehicleState,
    pub delta_sw: f64,
    pub residual: f64,
}

const TRIM_TOL: f64 = 1e-10;
const TRIM_MAX_ITER: usize = 60;
/// Continuation increment on the steering-wheel angle [rad].
const TRIM_CONTINUATION_STEP: f64 = 0.0349;

fn trim_residual(
    z: &Vector3<f64>,
    u0: f64,
    delta_sw: f64,
    params: &VehicleParams,
    tire: &TireParams,
    config: &PlantConfig,
) -> Result<Vector3<f64>> {
    let s = VehicleState {
        v: z[0],
        r: z[1],
        phi: z[2],
        ..VehicleState::straight(u0)
    };
    let d = derivatives_with(&s, delta_sw, params, tire, config)?;
    Ok(Vector3::new(d.dv, d.dr, d.dp))
}

fn newton_trim(
    start: Vector3<f64>,
    u0: f64,
    delta_sw: f64,
    params: &VehicleParams,
    tire: &TireParams,
    config: &PlantConfig,
) -> Result<(Vector3<f64>, f64)> {
    let fail = |reason: String| Error::TrimNotFound {
        delta_deg: delta_sw.to_degrees(),
        reason,
    };
    let mut z = start;
    let mut f = trim_residual(&z, u0, delta_sw, params, tire, config)?;
    for _ in 0..TRIM_MAX_ITER {
        if f.norm() < TRIM_TOL {
            return Ok((z, f.norm()));
        }
        let mut jac = Matrix3::zeros();
        for j in 0..3 {
            let h = 1e-7 * z[j].abs().max(1e-2);
            let mut zp = z;
            let mut zm = z;
            zp[j] += h;
            zm[j] -= h;
            let col = (trim_residual(&zp, u0, delta_sw, params, tire, config)?
                - trim_residual(&zm, u0, delta_sw, params, tire, config)?)
                / (2.0 * h);
            jac.set_column(j, &col);
        }
        let step = jac
            .lu()
            .solve(&(-f))
            .ok_or_else(|| fail("singular trim Jacobian".into()))?;
        let mut lambda = 1.0;
        loop {
            let cand = z + step * lambda;
            if cand[2].abs() < 1.2 {
                let fc = trim_residual(&cand, u0, delta_sw, params, tire, config)?;
                if fc.norm() < f.norm() {
                    z = cand;
                    f = fc;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-8 {
                return Err(fail(format!("line search stalled at residual {:.3e}", f.norm())));
            }
        }
    }
    if f.norm() < TRIM_TOL {
        Ok((z, f.norm()))
    } else {
        Err(fail(format!("no convergence, residual {:.3e}", f.norm())))
    }
}

/// Steady-turn trim at forward speed `u0` and steering-wheel angle
/// `delta_sw`, reached by damped Newton with continuation from straight
/// running.
pub fn find_trim(
    params: &VehicleParams,
    tire: &TireParams,
    config: &PlantConfig,
    u0: f64,
    delta_sw: f64,
) -> Result<Trim> {
    if !(u0 > 0.0) {
        return Err(Error::NonPositiveSpeed(u0));
    }
    let config = PlantConfig {
        speed_mode: SpeedMode::Constant,
        ..*config
    };
    let n = (delta_sw.abs() / TRIM_CONTINUATION_STEP).ceil().max(1.0) as usize;
    let mut z = Vector3::zeros();
    let mut residual = 0.0;
    for i in 1..=n {
        let d = delta_sw * i as f64 / n as f64;
        (z, residual) = newton_trim(z, u0, d, params, tire, &config)?;
    }
    let state = VehicleState {
        v: z[0],
        r: z[1],
        phi: z[2],
        ..VehicleState::straight(u0)
    };
    if compute_ltr(&state, params).abs() >= 1.0 {
        return Err(Error::TrimNotFound {
            delta_deg: delta_sw.to_degrees(),
            reason: "steady turn would lift a wheel".into(),
        });
    }
    Ok(Trim {
        state,
        delta_sw,
        residual,
    })
}

/// Partials of the tire resultants `(F_y,T, N_T)` with respect to
/// `(v, r, p, phi, delta_SW)`, by central differences.
pub fn tire_partials(
    state: &VehicleState,
    delta_sw: f64,
    params: &VehicleParams,
    tire: &TireParams,
    config: &PlantConfig,
    step: f64,
) -> Result<[[f64; 5]; 2]> {
    let eval = |s: &VehicleState, d: f64| -> Result<(f64, f64)> {
        let f = tire_resultants(
            s.u,
            s.v,
            s.r,
            d / params.k_delta_sw,
            tire_load_transfer(s, params),
            config.tire_loading,
            params,
            tire,
        )?;
        Ok((f.fy, f.n))
    };
    let mut out = [[0.0; 5]; 2];
    for j in 0..5 {
        let shift = |sign: f64| -> (VehicleState, f64) {
            let mut s = *state;
            let mut d = delta_sw;
            let h = sign * step;
            match j {
                0 => s.v += h,
                1 => s.r += h,
                2 => s.p += h,
                3 => s.phi += h,
                _ => d += h,
            }
            (s, d)
        };
        let (sp, dp) = shift(1.0);
        let (sm, dm) = shift(-1.0);
        let (fp, np) = eval(&sp, dp)?;
        let (fm, nm) = eval(&sm, dm)?;
        out[0][j] = (fp - fm) / (2.0 * step);
        out[1][j] = (np - nm) / (2.0 * step);
    }
    Ok(out)
}

/// Step used for the tire-force partials.
pub const TIRE_PARTIAL_STEP: f64 = 1e-6;

/// Continuous-time linearisation at the trim for `delta0` [rad].
///
/// The chassis terms are differentiated in closed form; only the tire
/// resultants are differenced numerically.
pub fn linearize(
    params: &VehicleParams,
    tire: &TireParams,
    config: &PlantConfig,
    u0: f64,
    delta0: f64,
) -> Result<LinearModel> {
    let trim = find_trim(params, tire, config, u0, delta0)?;
    linearize_at(params, tire, config, &trim.state, delta0)
}

/// Linearisation of the grounded equations at an arbitrary grounded state.
pub fn linearize_at(
    params: &VehicleParams,
    tire: &TireParams,
    config: &PlantConfig,
    state: &VehicleState,
    delta0: f64,
) -> Result<LinearModel> {
    let tp = tire_partials(state, delta0, params, tire, config, TIRE_PARTIAL_STEP)?;
    let forces = tire_resultants(
        state.u,
        state.v,
        state.r,
        delta0 / params.k_delta_sw,
        tire_load_transfer(state, params),
        config.tire_loading,
        params,
        tire,
    )?;
    let (m, h, msm) = (params.m, params.h_sm, params.m_sm);
    let mu = params.m_uc / m;
    let k_eff = params.k_s * (1.0 - params.dk_ss.powi(2));
    let d_eff = params.d_s * (1.0 - params.dd_ss.powi(2));
    let (phi, p, u) = (state.phi, state.p, state.u);
    let (sphi, cphi) = phi.sin_cos();
    let tphi = phi.tan();

    let l_t = -k_eff * tphi - d_eff * p * cphi - m * G * (params.dk_ss + params.dd_ss);
    let i_eff = params.i_xx_sm + h * h * msm * mu * cphi;
    let num = h * msm * (forces.fy / m + sphi * (G + h * mu * p * p)) + l_t;
    let dp = num / i_eff;

    // Column order: v, r, p, phi, delta.
    let fy = tp[0];
    let nt = tp[1];
    let mut dnum = [0.0; 5];
    for j in 0..5 {
        dnum[j] = h * msm * fy[j] / m;
    }
    dnum[2] += h * msm * sphi * 2.0 * h * mu * p - d_eff * cphi;
    dnum[3] += h * msm * cphi * (G + h * mu * p * p) - k_eff * (1.0 + tphi * tphi) + d_eff * p * sphi;
    let di_eff_dphi = -h * h * msm * mu * sphi;

    let mut dpdot = [0.0; 5];
    for j in 0..5 {
        dpdot[j] = dnum[j] / i_eff;
    }
    dpdot[3] -= num * di_eff_dphi / (i_eff * i_eff);

    let mut dvdot = [0.0; 5];
    for j in 0..5 {
        dvdot[j] = (fy[j] + msm * h * dpdot[j] * cphi) / m;
    }
    dvdot[1] -= u;
    dvdot[2] -= msm * h * 2.0 * p * sphi / m;
    dvdot[3] += msm * h * (-dp * sphi - p * p * cphi) / m;

    let mut a = DMatrix::zeros(N_STATES, N_STATES);
    let mut b = DMatrix::zeros(N_STATES, 1);
    for j in 0..4 {
        a[(0, j)] = dvdot[j];
        a[(1, j)] = nt[j] / params.i_zz;
        a[(2, j)] = dpdot[j];
    }
    a[(3, 2)] = 1.0;
    b[(0, 0)] = dvdot[4];
    b[(1, 0)] = nt[4] / params.i_zz;
    b[(2, 0)] = dpdot[4];

    let mgt = m * G * params.track;
    let mut c = DMatrix::zeros(N_OUTPUTS, N_STATES);
    c[(0, 2)] = 2.0 * d_eff * cphi / mgt;
    c[(0, 3)] = 2.0 * (k_eff * (1.0 + tphi * tphi) - d_eff * p * sphi) / mgt;
    let mut d = DMatrix::zeros(N_OUTPUTS, 1);
    d[(1, 0)] = 1.0;

    Ok(LinearModel {
        a,
        b,
        c,
        d,
        x0: state.lateral(),
        delta0,
        y0: [compute_ltr(state, params), delta0],
        speed: u,
        dt: None,
    })
}

/// Zero-order-hold discretisation with sample time `dt`.
pub fn discretize(model: &LinearModel, dt: f64) -> Result<LinearModel> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("sample time must be positive, got {dt}")));
    }
    if model.is_discrete() {
        return Err(Error::InvalidInput("model is already discrete".into()));
    }
    let (ad, bd) = linalg::zoh(&model.a, &model.b, dt);
    Ok(LinearModel {
        a: ad,
        b: bd,
        dt: Some(dt),
        ..model.clone()
    })
}

/// Discrete models at a list of steering operating points, mirrored for
/// negative steering.
#[derive(Debug, Clone, PartialEq)]
pub struct MplBank {
    /// Models for non-negative operating points, increasing in `delta0`.
    pub models: Vec<LinearModel>,
}

/// Which bank entry to use and whether it is mirrored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub index: usize,
    pub mirrored: bool,
}

impl MplBank {
    /// Linearise and discretise at each point of `points_deg`. Points whose
    /// trim cannot be found are skipped with a warning; the origin must
    /// succeed. Each discrete model must be Schur.
    pub fn build(
        params: &VehicleParams,
        tire: &TireParams,
        config: &PlantConfig,
        speed: f64,
        points_deg: &[f64],
        dt: f64,
    ) -> Result<Self> {
        let mut models = Vec::with_capacity(points_deg.len());
        for &deg in points_deg {
            let cont = match linearize(params, tire, config, speed, deg.to_radians()) {
                Ok(m) => m,
                Err(e @ Error::TrimNotFound { .. }) if deg != 0.0 => {
                    log::warn!("skipping linearisation point {deg} deg: {e}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let disc = discretize(&cont, dt)?;
            let rho = linalg::spectral_radius(&disc.a);
            if rho >= 1.0 {
                return Err(Error::NotSchur(rho));
            }
            models.push(disc);
        }
        Self::from_models(models)
    }

    pub fn from_models(models: Vec<LinearModel>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::InvalidInput("linearisation bank is empty".into()))?;
        if first.delta0 != 0.0 {
            return Err(Error::InvalidInput("first bank point must be the origin".into()));
        }
        if models.windows(2).any(|w| !(w[1].delta0 > w[0].delta0)) {
            return Err(Error::InvalidInput(
                "bank points must be strictly increasing".into(),
            ));
        }
        Ok(Self { models })
    }

    pub fn points(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.delta0).collect()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Nearest operating point to `|delta|`; ties go to the smaller point.
    pub fn select(&self, delta: f64) -> Selection {
        let mag = delta.abs();
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, m) in self.models.iter().enumerate() {
            let dist = (mag - m.delta0).abs();
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        Selection {
            index: best,
            mirrored: delta < 0.0 && self.models[best].delta0 > 0.0,
        }
    }

    /// Model for the current steering angle, mirrored for negative angles.
    pub fn select_model(&self, delta: f64) -> LinearModel {
        let sel = self.select(delta);
        let m = &self.models[sel.index];
        if sel.mirrored {
            m.mirrored()
        } else {
            m.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        let file = BankFile {
            models: self.models.iter().map(ModelRecord::from).collect(),
        };
        Ok(toml::to_string_pretty(&file)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: BankFile = toml::from_str(text)?;
        let models = file
            .models
            .into_iter()
            .map(LinearModel::try_from)
            .collect::<Result<Vec<_>>>()?;
        Self::from_models(models)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BankFile {
    models: Vec<ModelRecord>,
}

/// On-disk model: matrices as row lists.
#[derive(Debug, Serialize, Deserialize)]
struct ModelRecord {
    /// Operating steering-wheel angle [rad].
    delta0: f64,
    speed: f64,
    dt: Option<f64>,
    x0: Vec<f64>,
    y0: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if r.len() != nrows {
        return Err(Error::DimensionMismatch {
            expected: nrows,
            got: r.len(),
        });
    }
    if let Some(bad) = r.iter().find(|row| row.len() != ncols) {
        return Err(Error::DimensionMismatch {
            expected: ncols,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| r[i][j]))
}

impl From<&LinearModel> for ModelRecord {
    fn from(m: &LinearModel) -> Self {
        Self {
            delta0: m.delta0,
            speed: m.speed,
            dt: m.dt,
            x0: m.x0.to_vec(),
            y0: m.y0.to_vec(),
            a: rows(&m.a),
            b: rows(&m.b),
            c: rows(&m.c),
            d: rows(&m.d),
        }
    }
}

impl TryFrom<ModelRecord> for LinearModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        let x0: [f64; N_STATES] = r.x0.as_slice().try_into().map_err(|_| Error::DimensionMismatch {
            expected: N_STATES,
            got: r.x0.len(),
        })?;
        let y0: [f64; N_OUTPUTS] = r.y0.as_slice().try_into().map_err(|_| Error::DimensionMismatch {
            expected: N_OUTPUTS,
            got: r.y0.len(),
        })?;
        Ok(Self {
            a: from_rows(&r.a, N_STATES, N_STATES)?,
            b: from_rows(&r.b, N_STATES, 1)?,
            c: from_rows(&r.c, N_OUTPUTS, N_STATES)?,
            d: from_rows(&r.d, N_OUTPUTS, 1)?,
            x0,
            delta0: r.delta0,
            y0,
            speed: r.speed,
            dt: r.dt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::derivatives_with;

    const SPEED: f64 = 20.0;

    fn setup() -> (VehicleParams, TireParams, PlantConfig) {
        (VehicleParams::default(), TireParams::default(), PlantConfig::default())
    }

    fn lin(deg: f64) -> LinearModel {
        let (p, t, c) = setup();
        linearize(&p, &t, &c, SPEED, deg.to_radians()).unwrap()
    }

    /// Central differences of the full plant derivative function.
    fn fd_jacobian(model: &LinearModel, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let (p, t, c) = setup();
        let base = VehicleState {
            v: model.x0[0],
            r: model.x0[1],
            p: model.x0[2],
            phi: model.x0[3],
            ..VehicleState::straight(model.speed)
        };
        let f = |s: &VehicleState, d: f64| {
            let dd = derivatives_with(s, d, &p, &t, &c).unwrap();
            [dd.dv, dd.dr, dd.dp, dd.dphi]
        };
        let mut a = DMatrix::zeros(4, 4);
        let mut b = DMatrix::zeros(4, 1);
        for j in 0..5 {
            let mut sp = base;
            let mut sm = base;
            let (mut dp, mut dm) = (model.delta0, model.delta0);
            match j {
                0 => (sp.v, sm.v) = (base.v + h, base.v - h),
                1 => (sp.r, sm.r) = (base.r + h, base.r - h),
                2 => (sp.p, sm.p) = (base.p + h, base.p - h),
                3 => (sp.phi, sm.phi) = (base.phi + h, base.phi - h),
                _ => (dp, dm) = (dp + h, dm - h),
            }
            let (fp, fm) = (f(&sp, dp), f(&sm, dm));
            for i in 0..4 {
                let g = (fp[i] - fm[i]) / (2.0 * h);
                if j < 4 {
                    a[(i, j)] = g;
                } else {
                    b[(i, 0)] = g;
                }
            }
        }
        (a, b)
    }

    fn agrees(x: f64, y: f64) -> bool {
        (x - y).abs() <= 1e-4_f64.max(1e-3 * y.abs())
    }

    #[test]
    fn jacobian_matches_finite_differences_at_bank_points() {
        for &deg in BANK_RGMPL3 {
            let m = lin(deg);
            let (a, b) = fd_jacobian(&m, 1e-5);
            for i in 0..4 {
                for j in 0..4 {
                    assert!(agrees(m.a[(i, j)], a[(i, j)]), "{deg} deg A[{i},{j}]: {} vs {}", m.a[(i, j)], a[(i, j)]);
                }
                assert!(agrees(m.b[(i, 0)], b[(i, 0)]), "{deg} deg B[{i}]");
            }
        }
    }

    #[test]
    fn roll_angle_row_is_integrator() {
        let m = lin(0.0);
        assert_eq!(m.a.row(3).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(m.b[(3, 0)], 0.0);
    }

    #[test]
    fn roll_stiffness_entry_at_origin() {
        let (p, _, _) = setup();
        let m = lin(0.0);
        let i_eff = p.i_xx_sm + p.h_sm * p.h_sm * p.m_sm * p.m_uc / p.m;
        let expected = (p.m_sm * G * p.h_sm - p.k_s) / i_eff;
        assert!((m.a[(2, 3)] - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn output_map_at_origin() {
        let (p, _, _) = setup();
        let m = lin(0.0);
        let mgt = p.m * G * p.track;
        assert!((m.c[(0, 3)] - 2.0 * p.k_s / mgt).abs() < 1e-12);
        assert!((m.c[(0, 2)] - 2.0 * p.d_s / mgt).abs() < 1e-12);
        assert_eq!(m.d[(1, 0)], 1.0);
        assert_eq!(m.d[(0, 0)], 0.0);
    }

    #[test]
    fn output_prediction_is_first_order_accurate() {
        let (p, _, _) = setup();
        for deg in [0.0, 60.0, 130.0] {
            let m = lin(deg);
            let dx = DVector::from_column_slice(&[1e-4, -2e-4, 3e-4, 1e-4]);
            let y = m.output(&dx, 0.0);
            let s = VehicleState {
                v: m.x0[0] + dx[0],
                r: m.x0[1] + dx[1],
                p: m.x0[2] + dx[2],
                phi: m.x0[3] + dx[3],
                ..VehicleState::straight(SPEED)
            };
            assert!((y[0] - compute_ltr(&s, &p)).abs() < 1e-6);
            let at_trim = m.output(&DVector::zeros(4), 0.0);
            let trim = VehicleState {
                v: m.x0[0],
                r: m.x0[1],
                p: m.x0[2],
                phi: m.x0[3],
                ..VehicleState::straight(SPEED)
            };
            assert!((at_trim[0] - compute_ltr(&trim, &p)).abs() < 1e-9);
            assert!((at_trim[1] - deg.to_radians()).abs() < 1e-15);
        }
    }

    #[test]
    fn tire_partials_stable_under_step_change() {
        let (p, t, c) = setup();
        let trim = find_trim(&p, &t, &c, SPEED, 1.2).unwrap();
        let a = tire_partials(&trim.state, 1.2, &p, &t, &c, 1e-6).unwrap();
        let b = tire_partials(&trim.state, 1.2, &p, &t, &c, 1e-5).unwrap();
        for i in 0..2 {
            for j in 0..5 {
                assert!((a[i][j] - b[i][j]).abs() <= 1e-5 * a[i][j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn trim_is_steady() {
        let (p, t, c) = setup();
        let trim = find_trim(&p, &t, &c, SPEED, 80f64.to_radians()).unwrap();
        let d = derivatives_with(&trim.state, trim.delta_sw, &p, &t, &c).unwrap();
        assert!(d.dv.abs() < 1e-9 && d.dr.abs() < 1e-9 && d.dp.abs() < 1e-9);
        assert!(trim.state.r > 0.0 && trim.state.phi > 0.0);
    }

    #[test]
    fn linearisation_is_symmetric_in_steering() {
        let a = lin(60.0);
        let b = lin(-60.0);
        assert!((&a.a - &b.a).abs().max() < 1e-6);
        assert!((&a.b - &b.b).abs().max() < 1e-6);
        for i in 0..4 {
            assert!((a.x0[i] + b.x0[i]).abs() < 1e-9);
        }
        assert!((a.y0[0] + b.y0[0]).abs() < 1e-9);
        let m = a.mirrored();
        assert_eq!(m.a, a.a);
        assert_eq!(m.delta0, -a.delta0);
    }

    #[test]
    fn discretize_zero_dynamics() {
        let m = LinearModel {
            a: DMatrix::zeros(4, 4),
            b: DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]),
            c: DMatrix::zeros(2, 4),
            d: DMatrix::zeros(2, 1),
            x0: [0.0; 4],
            delta0: 0.0,
            y0: [0.0; 2],
            speed: SPEED,
            dt: None,
        };
        let d = discretize(&m, 0.01).unwrap();
        assert!((&d.a - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-15);
        assert!((&d.b - &m.b * 0.01).abs().max() < 1e-15);
        assert!(discretize(&d, 0.01).is_err());
        assert!(discretize(&m, 0.0).is_err());
    }

    /// Scaling-and-squaring with a truncated Taylor series as an independent
    /// matrix-exponential oracle.
    fn expm_oracle(m: &DMatrix<f64>) -> DMatrix<f64> {
        let s = 10;
        let scaled = m / f64::from(1 << s);
        let n = m.nrows();
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..20 {
            term = &term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn discretize_matches_series_oracle() {
        let m = lin(0.0);
        let d = discretize(&m, 0.01).unwrap();
        let mut aug = DMatrix::zeros(5, 5);
        aug.view_mut((0, 0), (4, 4)).copy_from(&(&m.a * 0.01));
        aug.view_mut((0, 4), (4, 1)).copy_from(&(&m.b * 0.01));
        let e = expm_oracle(&aug);
        assert!((&d.a - e.view((0, 0), (4, 4))).abs().max() < 1e-10);
        assert!((&d.b - e.view((0, 4), (4, 1))).abs().max() < 1e-10);
        assert_eq!(d.c, m.c);
        assert_eq!(d.d, m.d);
    }

    #[test]
    fn bank_models_are_schur() {
        let (p, t, c) = setup();
        let bank = MplBank::build(&p, &t, &c, SPEED, BANK_RGMPL3, 0.01).unwrap();
        assert_eq!(bank.len(), BANK_RGMPL3.len());
        for m in &bank.models {
            assert!(linalg::is_schur(&m.a));
        }
    }

    fn toy_bank(points: &[f64]) -> MplBank {
        let m0 = lin(0.0);
        let models = points
            .iter()
            .map(|d| LinearModel {
                delta0: d.to_radians(),
                ..m0.clone()
            })
            .collect();
        MplBank::from_models(models).unwrap()
    }

    #[test]
    fn nearest_point_selection() {
        let bank = toy_bank(BANK_COARSE);
        let pick = |deg: f64| bank.select(f64::to_radians(deg));
        assert_eq!(pick(5.0).index, 0);
        // |-100| is 20 from 80 and 30 from 130.
        assert_eq!(pick(-100.0), Selection { index: 3, mirrored: true });
        assert_eq!(bank.select_model(f64::to_radians(-100.0)).delta0, -80f64.to_radians());
        let bank = toy_bank(BANK_RGMPL3);
        // Exactly halfway between 20 and 40 goes to the smaller point.
        assert_eq!(bank.select(30f64.to_radians()).index, 1);
        assert!(!bank.select(-0.0).mirrored);
        assert_eq!(bank.select(175f64.to_radians()).index, BANK_RGMPL3.len() - 1);
    }

    #[test]
    fn bank_rejects_bad_ordering() {
        let m0 = lin(0.0);
        let later = LinearModel {
            delta0: 0.3,
            ..m0.clone()
        };
        assert!(MplBank::from_models(vec![later.clone(), m0.clone()]).is_err());
        assert!(MplBank::from_models(vec![m0.clone(), later.clone(), later]).is_err());
        assert!(MplBank::from_models(vec![]).is_err());
    }

    #[test]
    fn bank_round_trips_through_toml() {
        let (p, t, c) = setup();
        let bank = MplBank::build(&p, &t, &c, SPEED, BANK_COARSE, 0.01).unwrap();
        let text = bank.to_toml().unwrap();
        let back = MplBank::from_toml(&text).unwrap();
        assert_eq!(back, bank);
    }

    #[test]
    fn yaw_gain_is_positive() {
        let g = lin(0.0).steady_state_gain().unwrap();
        assert!(g[1] > 0.0);
        let tau = lin(0.0).slowest_time_constant().unwrap();
        assert!(tau > 0.0 && tau < 1.0);
    }
}
