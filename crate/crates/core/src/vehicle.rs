//! Nonlinear roll-augmented single-track plant.
//!
//! With all wheels on the road the lateral, yaw and roll motion follows the
//! standard roll-plane equations with Magic Formula tires on each axle.
//! By default each axle carries a left and a right tire whose vertical loads
//! follow the load-transfer ratio, so the loaded side saturates first.
//! Once the load-transfer ratio reaches one, the unloaded side leaves the
//! road and the undercarriage pivots about the loaded wheels' contact line
//! while the sprung mass keeps rolling on the suspension (two hinged bodies).
//! Touchdown restores the grounded equations with the sprung-mass roll rate
//! carried over unchanged.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{TireParams, VehicleParams, G};
use crate::tire::tire_forces;

/// Undercarriage roll beyond which the vehicle is considered rolled over.
pub const ROLLOVER_ANGLE: f64 = std::f64::consts::FRAC_PI_2;

/// Which wheels are on the road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Contact {
    #[default]
    Grounded,
    /// Left wheels off the road; the vehicle pivots about the right contact line.
    LeftLifted,
    /// Right wheels off the road.
    RightLifted,
    /// Undercarriage roll exceeded [`ROLLOVER_ANGLE`]; integration stops.
    RolledOver,
}

impl Contact {
    /// Roll-direction sign of the lift (+1 when the left side lifts).
    fn side(self) -> f64 {
        match self {
            Contact::LeftLifted => 1.0,
            Contact::RightLifted => -1.0,
            _ => 0.0,
        }
    }

    pub fn is_lifted(self) -> bool {
        matches!(self, Contact::LeftLifted | Contact::RightLifted)
    }
}

/// Plant state. Body-frame velocities, sprung-mass roll relative to the
/// undercarriage, inertial pose, and the undercarriage pivot roll used while
/// wheels are lifted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub u: f64,
    pub v: f64,
    pub p: f64,
    pub r: f64,
    pub phi: f64,
    pub psi: f64,
    pub x: f64,
    pub y: f64,
    pub phi_uc: f64,
    pub p_uc: f64,
    pub contact: Contact,
}

impl VehicleState {
    /// Straight running at forward speed `u`.
    pub fn straight(u: f64) -> Self {
        Self {
            u,
            ..Self::default()
        }
    }

    pub fn liftoff(&self) -> bool {
        self.contact.is_lifted()
    }

    /// Absolute sprung-mass roll (suspension roll plus undercarriage roll).
    pub fn sprung_roll(&self) -> f64 {
        self.phi + self.phi_uc
    }

    /// Lateral states in linear-model order `(v, r, p, phi)`.
    pub fn lateral(&self) -> [f64; 4] {
        [self.v, self.r, self.p, self.phi]
    }

    fn to_array(self) -> [f64; 10] {
        [
            self.u, self.v, self.p, self.r, self.phi, self.psi, self.x, self.y, self.phi_uc,
            self.p_uc,
        ]
    }

    fn with_array(self, a: [f64; 10]) -> Self {
        Self {
            u: a[0],
            v: a[1],
            p: a[2],
            r: a[3],
            phi: a[4],
            psi: a[5],
            x: a[6],
            y: a[7],
            phi_uc: a[8],
            p_uc: a[9],
            contact: self.contact,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Time derivative of [`VehicleState`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub du: f64,
    pub dv: f64,
    pub dp: f64,
    pub dr: f64,
    pub dphi: f64,
    pub dpsi: f64,
    pub dx: f64,
    pub dy: f64,
    pub dphi_uc: f64,
    pub dp_uc: f64,
}

impl StateDerivative {
    fn to_array(self) -> [f64; 10] {
        [
            self.du, self.dv, self.dp, self.dr, self.dphi, self.dpsi, self.dx, self.dy,
            self.dphi_uc, self.dp_uc,
        ]
    }

    /// Lateral acceleration of the reference point, `v' + u r`.
    pub fn lateral_accel(&self, state: &VehicleState) -> f64 {
        self.dv + state.u * state.r
    }
}

/// Measured plant outputs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantOutput {
    pub ltr: f64,
    pub delta_sw: f64,
    pub wheel_lift: f64,
    pub a_y: f64,
    pub beta: f64,
}

/// Longitudinal behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedMode {
    /// `u' = 0`: steering-only maneuvers.
    #[default]
    Constant,
    /// Longitudinal equation active (zero wheel torque).
    Free,
}

/// How the axle load is distributed over the tires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TireLoading {
    /// One tire per axle at the static axle load.
    PerAxle,
    /// Left and right tires share the axle load as `(1 -/+ LTR) / 2`, with
    /// the load-transfer ratio clamped to `[-1, 1]`.
    #[default]
    PerWheelTransfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub speed_mode: SpeedMode,
    #[serde(default)]
    pub tire_loading: TireLoading,
    /// Upper bound on the RK4 inner step [s].
    pub inner_dt: f64,
    /// Lateral speed magnitude treated as divergence [m/s].
    pub max_lateral_speed: f64,
    /// Yaw/roll rate magnitude treated as divergence [rad/s].
    pub max_rate: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            speed_mode: SpeedMode::Constant,
            tire_loading: TireLoading::PerWheelTransfer,
            inner_dt: 1e-3,
            max_lateral_speed: 100.0,
            max_rate: 50.0,
        }
    }
}

/// Slip angles `(alpha_f, alpha_r)` of the lumped front and rear tires.
pub fn slip_angles(state: &VehicleState, delta_f: f64, params: &VehicleParams) -> Result<(f64, f64)> {
    if !(state.u > 0.0) {
        return Err(Error::NonPositiveSpeed(state.u));
    }
    let alpha_f = delta_f - ((state.v + params.l_f * state.r) / state.u).atan();
    let alpha_r = ((-state.v + params.l_r * state.r) / state.u).atan();
    Ok((alpha_f, alpha_r))
}

/// Load-transfer ratio from the suspension roll moment. Positive when the
/// right side carries more load. Its magnitude may exceed one.
pub fn compute_ltr(state: &VehicleState, params: &VehicleParams) -> f64 {
    let moment = params.k_s * (1.0 - params.dk_ss.powi(2)) * state.phi.tan()
        + params.d_s * (1.0 - params.dd_ss.powi(2)) * state.p * state.phi.cos();
    2.0 * moment / (params.m * G * params.track)
}

/// Suspension roll moment acting on the sprung mass.
fn suspension_moment(params: &VehicleParams, phi: f64, p: f64) -> f64 {
    -params.k_s * (1.0 - params.dk_ss.powi(2)) * phi.tan()
        - params.d_s * (1.0 - params.dd_ss.powi(2)) * p * phi.cos()
        - params.m * G * (params.dk_ss + params.dd_ss)
}

/// Tire force resultants: total lateral force, yaw moment and total
/// longitudinal force in body axes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TireResultants {
    pub fy: f64,
    pub n: f64,
    pub fx: f64,
}

/// Load-transfer ratio seen by the tires: the suspension value clamped to
/// `[-1, 1]` on the road, the loaded side's sign while lifted.
pub(crate) fn tire_load_transfer(state: &VehicleState, params: &VehicleParams) -> f64 {
    if state.contact.is_lifted() {
        state.contact.side()
    } else {
        compute_ltr(state, params).clamp(-1.0, 1.0)
    }
}

/// Axle force `(Fx, Fy)` for one axle with static load `fz`.
fn axle_forces(
    tire: &TireParams,
    fz: f64,
    alpha: f64,
    load_transfer: f64,
    loading: TireLoading,
    params: &VehicleParams,
) -> (f64, f64) {
    match loading {
        TireLoading::PerAxle => tire_forces(tire, fz, alpha, 0.0, params),
        TireLoading::PerWheelTransfer => {
            let (xl, yl) = tire_forces(tire, 0.5 * fz * (1.0 - load_transfer), alpha, 0.0, params);
            let (xr, yr) = tire_forces(tire, 0.5 * fz * (1.0 + load_transfer), alpha, 0.0, params);
            (xl + xr, yl + yr)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn tire_resultants(
    u: f64,
    v: f64,
    r: f64,
    delta_f: f64,
    load_transfer: f64,
    loading: TireLoading,
    params: &VehicleParams,
    tire: &TireParams,
) -> Result<TireResultants> {
    let probe = VehicleState {
        u,
        v,
        r,
        ..VehicleState::default()
    };
    let (alpha_f, alpha_r) = slip_angles(&probe, delta_f, params)?;
    let (fz_f, fz_r) = params.axle_loads();
    let (fx_f, fy_f) = axle_forces(tire, fz_f, alpha_f, load_transfer, loading, params);
    let (fx_r, fy_r) = axle_forces(tire, fz_r, alpha_r, load_transfer, loading, params);
    let (s, c) = delta_f.sin_cos();
    Ok(TireResultants {
        fy: fy_f * c + fy_r,
        n: params.l_f * fy_f * c - params.l_r * fy_r,
        fx: fx_f * c - fy_f * s + fx_r,
    })
}

/// State derivative for steering-wheel angle `delta_sw` [rad] under the
/// default plant configuration.
pub fn derivatives(
    state: &VehicleState,
    delta_sw: f64,
    params: &VehicleParams,
    tire: &TireParams,
) -> Result<StateDerivative> {
    derivatives_with(state, delta_sw, params, tire, &PlantConfig::default())
}

pub fn derivatives_with(
    state: &VehicleState,
    delta_sw: f64,
    params: &VehicleParams,
    tire: &TireParams,
    config: &PlantConfig,
) -> Result<StateDerivative> {
    if !state.is_finite() || !delta_sw.is_finite() {
        return Err(Error::NonFiniteState);
    }
    if state.contact == Contact::RolledOver {
        return Ok(StateDerivative::default());
    }
    let delta_f = delta_sw / params.k_delta_sw;
    let forces = tire_resultants(
        state.u,
        state.v,
        state.r,
        delta_f,
        tire_load_transfer(state, params),
        config.tire_loading,
        params,
        tire,
    )?;
    let m = params.m;
    let h = params.h_sm;
    let (sphi, cphi) = state.phi.sin_cos();
    let p = state.p;

    let mut d = StateDerivative {
        dr: forces.n / params.i_zz,
        dphi: p,
        dpsi: state.r,
        dx: state.u * state.psi.cos() - state.v * state.psi.sin(),
        dy: state.u * state.psi.sin() + state.v * state.psi.cos(),
        ..StateDerivative::default()
    };

    let l_t = suspension_moment(params, state.phi, p);
    if state.contact.is_lifted() {
        let (a_o, phi_uc_dd, phi_dd) = lifted_accelerations(state, forces.fy, l_t, params);
        d.dv = a_o - state.u * state.r;
        d.dp = phi_dd;
        d.dphi_uc = state.p_uc;
        d.dp_uc = phi_uc_dd;
    } else {
        let mu = params.m_uc / m;
        let i_eff = params.i_xx_sm + h * h * params.m_sm * mu * cphi;
        let dp = (h * params.m_sm * (forces.fy / m + sphi * (G + h * mu * p * p)) + l_t) / i_eff;
        d.dp = dp;
        d.dv = (forces.fy + params.m_sm * h * (dp * cphi - p * p * sphi)) / m - state.u * state.r;
    }

    if config.speed_mode == SpeedMode::Free {
        d.du = (forces.fx - params.m_sm * h * p * cphi) / m + state.v * state.r;
    }
    Ok(d)
}

/// Accelerations `(a_pivot, phi_uc'', phi'')` while one side is lifted.
///
/// Worked in the mirrored frame where the left side lifts, with the pivot on
/// the right contact line. Generalised coordinates are the undercarriage
/// pivot angle and the suspension roll; the pivot's lateral acceleration is
/// the third unknown, fixed by the total tire lateral force.
fn lifted_accelerations(
    state: &VehicleState,
    fy_total: f64,
    l_t: f64,
    params: &VehicleParams,
) -> (f64, f64, f64) {
    let s = state.contact.side();
    let th = s * state.phi_uc;
    let th_d = s * state.p_uc;
    let ph = s * state.phi;
    let ph_d = s * state.p;
    let a = 0.5 * params.track;
    let h = params.h_sm;
    let (m_uc, m_sm) = (params.m_uc, params.m_sm);
    let psi1 = th + ph;
    let om = th_d + ph_d;
    let (sth, cth) = th.sin_cos();
    let (sp, cp) = psi1.sin_cos();

    // Jacobians of the undercarriage (R) and sprung (S) mass centres; rows y, z.
    let j_r = Matrix2::new(-a * sth, 0.0, a * cth, 0.0);
    let j_s = Matrix2::new(-a * sth - h * cp, -h * cp, a * cth - h * sp, -h * sp);
    let c_r = Vector2::new(-a * cth * th_d * th_d, -a * sth * th_d * th_d);
    let c_s = c_r + Vector2::new(h * sp * om * om, -h * cp * om * om);

    let mass = m_uc * j_r.transpose() * j_r
        + m_sm * j_s.transpose() * j_s
        + Matrix2::new(
            params.i_xx_uc + params.i_xx_sm,
            params.i_xx_sm,
            params.i_xx_sm,
            params.i_xx_sm,
        );
    let jy = Vector2::new(
        m_uc * j_r[(0, 0)] + m_sm * j_s[(0, 0)],
        m_uc * j_r[(0, 1)] + m_sm * j_s[(0, 1)],
    );
    let jz = Vector2::new(
        m_uc * j_r[(1, 0)] + m_sm * j_s[(1, 0)],
        m_uc * j_r[(1, 1)] + m_sm * j_s[(1, 1)],
    );
    let bias = m_uc * j_r.transpose() * c_r + m_sm * j_s.transpose() * c_s;
    let q = Vector2::new(0.0, s * l_t) - bias - G * jz;

    let sys = Matrix3::new(
        params.m, jy[0], jy[1], //
        jy[0], mass[(0, 0)], mass[(0, 1)], //
        jy[1], mass[(1, 0)], mass[(1, 1)],
    );
    let rhs = Vector3::new(
        s * fy_total - (m_uc * c_r[0] + m_sm * c_s[0]),
        q[0],
        q[1],
    );
    // The system matrix is a mass matrix: symmetric positive definite.
    let sol = sys
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| sys.lu().solve(&rhs).unwrap_or_else(Vector3::zeros));
    (s * sol[0], s * sol[1], s * sol[2])
}

/// Maximum wheel lift height for a state, `T sin|phi_uc|`.
pub fn wheel_lift(state: &VehicleState, params: &VehicleParams) -> f64 {
    params.track * state.phi_uc.abs().min(ROLLOVER_ANGLE).sin()
}

/// Extremes observed over the inner steps of one [`Vehicle::advance`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub max_wheel_lift: f64,
    pub max_abs_ltr: f64,
    pub max_abs_sprung_roll: f64,
    pub max_abs_phi_uc: f64,
    pub liftoff_entries: u32,
}

/// Plant instance: parameters plus integration settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub params: VehicleParams,
    pub tire: TireParams,
    pub config: PlantConfig,
}

impl Vehicle {
    pub fn new(params: VehicleParams, tire: TireParams) -> Result<Self> {
        Self::with_config(params, tire, PlantConfig::default())
    }

    pub fn with_config(params: VehicleParams, tire: TireParams, config: PlantConfig) -> Result<Self> {
        params.validate()?;
        tire.validate()?;
        if !(config.inner_dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "inner_dt",
                reason: "must be positive".into(),
            });
        }
        Ok(Self { params, tire, config })
    }

    pub fn derivatives(&self, state: &VehicleState, delta_sw: f64) -> Result<StateDerivative> {
        derivatives_with(state, delta_sw, &self.params, &self.tire, &self.config)
    }

    pub fn output(&self, state: &VehicleState, delta_sw: f64) -> Result<PlantOutput> {
        let d = self.derivatives(state, delta_sw)?;
        Ok(PlantOutput {
            ltr: compute_ltr(state, &self.params),
            delta_sw,
            wheel_lift: wheel_lift(state, &self.params),
            a_y: d.lateral_accel(state),
            beta: state.v.atan2(state.u),
        })
    }

    /// Advance `dt` seconds under constant steering, returning the new state.
    pub fn step(&self, state: &VehicleState, delta_sw: f64, dt: f64) -> Result<VehicleState> {
        let mut s = *state;
        self.advance(&mut s, delta_sw, dt, 0.0)?;
        Ok(s)
    }

    /// Advance in place with RK4 inner steps no longer than
    /// `config.inner_dt`, handling liftoff/touchdown between inner steps.
    /// `t0` is only used to label divergence errors.
    pub fn advance(&self, state: &mut VehicleState, delta_sw: f64, dt: f64, t0: f64) -> Result<StepStats> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("step length must be positive, got {dt}")));
        }
        let n = (dt / self.config.inner_dt - 1e-9).ceil().max(1.0) as usize;
        let h = dt / n as f64;
        let mut stats = StepStats::default();
        for i in 0..n {
            if state.contact == Contact::RolledOver {
                break;
            }
            let before = state.contact;
            *state = self.rk4(state, delta_sw, h)?;
            self.update_contact(state);
            self.check_bounds(state, t0 + (i + 1) as f64 * h)?;
            let ltr = compute_ltr(state, &self.params).abs();
            if before == Contact::Grounded && state.contact.is_lifted() {
                stats.liftoff_entries += 1;
            }
            stats.max_abs_ltr = stats.max_abs_ltr.max(ltr);
            stats.max_wheel_lift = stats.max_wheel_lift.max(wheel_lift(state, &self.params));
            stats.max_abs_sprung_roll = stats.max_abs_sprung_roll.max(state.sprung_roll().abs());
            stats.max_abs_phi_uc = stats.max_abs_phi_uc.max(state.phi_uc.abs());
        }
        Ok(stats)
    }

    fn rk4(&self, state: &VehicleState, delta_sw: f64, h: f64) -> Result<VehicleState> {
        let y0 = state.to_array();
        let k1 = self.derivatives(state, delta_sw)?.to_array();
        let s2 = state.with_array(axpy(&y0, 0.5 * h, &k1));
        let k2 = self.derivatives(&s2, delta_sw)?.to_array();
        let s3 = state.with_array(axpy(&y0, 0.5 * h, &k2));
        let k3 = self.derivatives(&s3, delta_sw)?.to_array();
        let s4 = state.with_array(axpy(&y0, h, &k3));
        let k4 = self.derivatives(&s4, delta_sw)?.to_array();
        let mut y = y0;
        for i in 0..10 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(state.with_array(y))
    }

    fn update_contact(&self, state: &mut VehicleState) {
        match state.contact {
            Contact::Grounded => {
                let ltr = compute_ltr(state, &self.params);
                if ltr >= 1.0 {
                    state.contact = Contact::LeftLifted;
                } else if ltr <= -1.0 {
                    state.contact = Contact::RightLifted;
                }
                if state.contact.is_lifted() {
                    state.phi_uc = 0.0;
                    state.p_uc = 0.0;
                }
            }
            Contact::LeftLifted | Contact::RightLifted => {
                let s = state.contact.side();
                if s * state.phi_uc <= 0.0 {
                    // Touchdown: undercarriage stops, sprung-mass roll rate kept.
                    state.phi_uc = 0.0;
                    state.p_uc = 0.0;
                    state.contact = Contact::Grounded;
                } else if state.phi_uc.abs() >= ROLLOVER_ANGLE {
                    state.phi_uc = s * ROLLOVER_ANGLE;
                    state.p_uc = 0.0;
                    state.contact = Contact::RolledOver;
                }
            }
            Contact::RolledOver => {}
        }
    }

    fn check_bounds(&self, state: &VehicleState, t: f64) -> Result<()> {
        if !state.is_finite() {
            return Err(Error::Divergence {
                t,
                what: "non-finite state".into(),
            });
        }
        let c = &self.config;
        if state.v.abs() > c.max_lateral_speed {
            return Err(Error::Divergence {
                t,
                what: format!("|v| = {:.2} m/s", state.v),
            });
        }
        for (name, val) in [("r", state.r), ("p", state.p), ("p_uc", state.p_uc)] {
            if val.abs() > c.max_rate {
                return Err(Error::Divergence {
                    t,
                    what: format!("|{name}| = {val:.2} rad/s"),
                });
            }
        }
        if state.phi.abs() >= ROLLOVER_ANGLE {
            return Err(Error::Divergence {
                t,
                what: format!("|phi| = {:.2} rad", state.phi),
            });
        }
        Ok(())
    }
}

fn axpy(y: &[f64; 10], a: f64, k: &[f64; 10]) -> [f64; 10] {
    let mut out = *y;
    for i in 0..10 {
        out[i] += a * k[i];
    }
    out
}
