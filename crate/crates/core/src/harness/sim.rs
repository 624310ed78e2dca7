//! Closed-loop simulation of one maneuver with a governor in the loop.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::NoiseSpec;
use crate::error::Result;
use crate::governor::{Governor, GovernorDecision};
use crate::maneuver::ManeuverSpec;
use crate::vehicle::{compute_ltr, wheel_lift, Contact, Vehicle, VehicleState};

/// Multiply `v`, `r`, `p` and `phi` by `1 + sigma * xi` with standard
/// normal `xi`. Components with zero sigma draw nothing, so the random
/// stream depends only on which states are perturbed.
pub fn inject_noise<R: Rng + ?Sized>(state: &VehicleState, noise: &NoiseSpec, rng: &mut R) -> VehicleState {
    let mut out = *state;
    let mut perturb = |x: &mut f64, sigma: f64| {
        if sigma > 0.0 {
            let xi: f64 = rng.sample(StandardNormal);
            *x *= 1.0 + sigma * xi;
        }
    };
    perturb(&mut out.v, noise.sigma_v);
    perturb(&mut out.r, noise.sigma_r);
    perturb(&mut out.p, noise.sigma_p);
    perturb(&mut out.phi, noise.sigma_phi);
    out
}

/// One control sample: the true plant state at `t` and the decision taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub reference: f64,
    pub v: f64,
    pub ltr: f64,
    pub wheel_lift: f64,
    pub sprung_roll: f64,
    pub yaw_rate: f64,
    pub lateral_speed: f64,
    pub contact: Contact,
    pub decision: GovernorDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub steps: Vec<StepRecord>,
    /// Largest wheel lift over all integration sub-steps [m].
    pub max_wheel_lift: f64,
    pub max_abs_ltr: f64,
    pub max_abs_sprung_roll: f64,
    pub rolled_over: bool,
    /// Integration failure that ended the run early.
    pub error: Option<String>,
}

impl SimResult {
    pub fn reference(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reference).collect()
    }

    pub fn applied(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.v).collect()
    }

    pub fn yaw_rate(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.yaw_rate).collect()
    }

    pub fn active(&self) -> Vec<bool> {
        self.steps.iter().map(|s| s.decision.active).collect()
    }

    pub fn solve_times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.decision.solve_time).collect()
    }

    pub fn active_fraction(&self) -> f64 {
        self.steps.iter().filter(|s| s.decision.active).count() as f64 / self.steps.len().max(1) as f64
    }
}

/// Run `maneuver` from straight running with `governor` deciding every `dt`
/// seconds. The governor sees a noisy copy of the state when `noise` is
/// given; the plant and all recorded quantities use the true state.
pub fn simulate<R: Rng + ?Sized>(
    vehicle: &Vehicle,
    maneuver: &ManeuverSpec,
    governor: &mut dyn Governor,
    dt: f64,
    mut noise: Option<(&NoiseSpec, &mut R)>,
    record_timing: bool,
) -> Result<SimResult> {
    maneuver.validate()?;
    governor.reset();
    let n = (maneuver.duration / dt).round() as usize;
    let mut state = VehicleState::straight(maneuver.speed);
    let mut out = SimResult {
        steps: Vec::with_capacity(n + 1),
        max_wheel_lift: 0.0,
        max_abs_ltr: 0.0,
        max_abs_sprung_roll: 0.0,
        rolled_over: false,
        error: None,
    };
    for k in 0..=n {
        let t = k as f64 * dt;
        let reference = maneuver.reference(t);
        let seen = match noise.as_mut() {
            Some((spec, rng)) => inject_noise(&state, spec, &mut **rng),
            None => state,
        };
        let mut decision = governor.step(reference, &seen)?;
        if !record_timing {
            decision.solve_time = 0.0;
        }
        let ltr = compute_ltr(&state, &vehicle.params);
        let lift = wheel_lift(&state, &vehicle.params);
        out.steps.push(StepRecord {
            t,
            reference,
            v: decision.v,
            ltr,
            wheel_lift: lift,
            sprung_roll: state.sprung_roll(),
            yaw_rate: state.r,
            lateral_speed: state.v,
            contact: state.contact,
            decision,
        });
        out.max_wheel_lift = out.max_wheel_lift.max(lift);
        out.max_abs_ltr = out.max_abs_ltr.max(ltr.abs());
        out.max_abs_sprung_roll = out.max_abs_sprung_roll.max(state.sprung_roll().abs());
        if k == n {
            break;
        }
        match vehicle.advance(&mut state, decision.v, dt, t) {
            Ok(stats) => {
                out.max_wheel_lift = out.max_wheel_lift.max(stats.max_wheel_lift);
                out.max_abs_ltr = out.max_abs_ltr.max(stats.max_abs_ltr);
                out.max_abs_sprung_roll = out.max_abs_sprung_roll.max(stats.max_abs_sprung_roll);
            }
            Err(e) => {
                out.error = Some(e.to_string());
                break;
            }
        }
    }
    out.rolled_over = state.contact == Contact::RolledOver;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::governor::PassThrough;
    use crate::params::{TireParams, VehicleParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vehicle() -> Vehicle {
        Vehicle::new(VehicleParams::default(), TireParams::default()).unwrap()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = VehicleState::straight(20.0);
        [s.v, s.r, s.p, s.phi] = [0.3, -0.2, 0.1, 0.05];
        assert_eq!(inject_noise(&s, &NoiseSpec::default(), &mut rng), s);
    }

    #[test]
    fn draws_are_distinct_and_replayable() {
        let mut s = VehicleState::straight(20.0);
        s.phi = 0.1;
        let spec = NoiseSpec::roll(0.1);
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let a1 = inject_noise(&s, &spec, &mut a);
        let a2 = inject_noise(&s, &spec, &mut a);
        assert_ne!(a1.phi, a2.phi);
        assert_eq!(a1, inject_noise(&s, &spec, &mut b));
        assert_eq!(a2, inject_noise(&s, &spec, &mut b));
        assert_eq!((a1.v, a1.r, a1.p), (s.v, s.r, s.p));
    }

    #[test]
    fn sample_sigma_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut s = VehicleState::straight(20.0);
        s.phi = 1.0;
        let spec = NoiseSpec::roll(0.2);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| inject_noise(&s, &spec, &mut rng).phi - 1.0).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 0.2).abs() < 0.002, "{}", var.sqrt());
    }

    #[test]
    fn open_loop_run_records_every_sample() {
        let m = ManeuverSpec::sine_with_dwell_deg(30.0);
        let r = simulate::<ChaCha8Rng>(&vehicle(), &m, &mut PassThrough, 0.01, None, true).unwrap();
        assert_eq!(r.steps.len(), (m.duration / 0.01).round() as usize + 1);
        assert!(r.error.is_none() && !r.rolled_over);
        assert_eq!(r.max_wheel_lift, 0.0);
        assert_eq!(r.active_fraction(), 0.0);
        assert!(r.steps.iter().all(|s| s.v == s.reference));
        assert!(r.max_abs_ltr > 0.1);
    }
}
