//! Combined-slip Magic Formula tire model.

use crate::params::{TireParams, VehicleParams, G};

/// Slip norms below this are treated as zero slip (the force limit is zero).
const ZERO_SLIP: f64 = 1e-12;

/// Longitudinal slip ratio from wheel circumferential speed `rw_omega` and
/// hub speed `u_w`. Braking is normalised by hub speed, traction by wheel
/// speed; both zero gives zero slip.
pub fn slip_ratio(rw_omega: f64, u_w: f64) -> f64 {
    if rw_omega < u_w {
        (rw_omega - u_w) / u_w
    } else if rw_omega > 0.0 {
        (rw_omega - u_w) / rw_omega
    } else {
        0.0
    }
}

/// Shape function `P(s_c, C, E)`.
pub fn shape(s_c: f64, c: f64, e: f64) -> f64 {
    let x = s_c / c;
    (c * (x * (1.0 - e) + e * x.atan()).atan()).sin()
}

/// Peak horizontal force `F_P` for vertical load `fz`.
pub fn peak_force(tire: &TireParams, fz: f64, mg: f64) -> f64 {
    let load = 1.5 * fz / mg;
    fz * 1.0527 * tire.d / (1.0 + load * load * load)
}

/// Cornering stiffness `C_alpha` (force per unit `tan(alpha)`).
pub fn cornering_stiffness(tire: &TireParams, fz: f64, mg: f64) -> f64 {
    let c1 = tire.b * tire.c * tire.d / (4.0 * (1.0 - (-tire.c2 / 4.0).exp()));
    c1 * mg * (1.0 - (-tire.c2 * fz / mg).exp())
}

/// Tire-axis forces `(Fx, Fy)` [N] for vertical load `fz`, slip angle
/// `slip_angle` [rad] and slip ratio `slip_ratio`.
///
/// `params` only supplies the vehicle weight used to normalise the load.
pub fn tire_forces(
    tire: &TireParams,
    fz: f64,
    slip_angle: f64,
    slip_ratio: f64,
    params: &VehicleParams,
) -> (f64, f64) {
    if fz <= 0.0 {
        return (0.0, 0.0);
    }
    let mg = params.m * G;
    let sx = slip_ratio;
    let sy = slip_angle.tan();
    let norm = sx.hypot(sy);
    if norm < ZERO_SLIP {
        return (0.0, 0.0);
    }
    let f_p = peak_force(tire, fz, mg);
    let s_c = cornering_stiffness(tire, fz, mg) * norm / f_p;
    let f = f_p * shape(s_c, tire.c, tire.e);
    (f * sx / norm, f * sy / norm)
}
