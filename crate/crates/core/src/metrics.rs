//! Evaluation metrics over recorded traces.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Default wheel-lift limit [m].
pub const DEFAULT_LIFT_LIMIT: f64 = 0.05;

/// Trapezoidal integral of uniformly sampled values.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    dt * (inner + 0.5 * (values[0] + values[values.len() - 1]))
}

/// `1 - max_lift / lift_limit`; negative when the limit is exceeded.
pub fn effectiveness(max_lift: f64, lift_limit: f64) -> f64 {
    1.0 - max_lift / lift_limit
}

fn check_aligned(lens: &[usize]) -> Result<()> {
    if lens.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::DimensionMismatch {
            expected: lens[0],
            got: *lens.iter().find(|l| **l != lens[0]).unwrap_or(&0),
        });
    }
    Ok(())
}

/// Extra command modification relative to a safe baseline, normalised by
/// the reference magnitude.
pub fn conservatism(reference: &[f64], applied: &[f64], safe: &[f64], dt: f64) -> Result<f64> {
    check_aligned(&[reference.len(), applied.len(), safe.len()])?;
    let den = trapezoid(&reference.iter().map(|r| r.abs()).collect::<Vec<_>>(), dt);
    if !(den > 0.0) {
        return Err(Error::ZeroReference);
    }
    let num: Vec<f64> = reference
        .iter()
        .zip(applied)
        .zip(safe)
        .map(|((r, a), s)| (r - a).abs() - (r - s).abs())
        .collect();
    Ok(trapezoid(&num, dt) / den)
}

/// Turn-rate fidelity relative to a safe baseline. The desired turn rate is
/// `yaw_gain0 * reference`; positive values mean the governed run tracks it
/// better than the baseline.
pub fn turning_response(
    reference: &[f64],
    r_applied: &[f64],
    r_safe: &[f64],
    yaw_gain0: f64,
    dt: f64,
) -> Result<f64> {
    check_aligned(&[reference.len(), r_applied.len(), r_safe.len()])?;
    let desired: Vec<f64> = reference.iter().map(|d| yaw_gain0 * d).collect();
    let den = trapezoid(&desired.iter().map(|r| r.abs()).collect::<Vec<_>>(), dt);
    if !(den > 0.0) {
        return Err(Error::ZeroReference);
    }
    let num: Vec<f64> = desired
        .iter()
        .zip(r_applied)
        .zip(r_safe)
        .map(|((d, a), s)| (d - s).abs() - (d - a).abs())
        .collect();
    Ok(trapezoid(&num, dt) / den)
}

/// Safe-trajectory definitions used for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Baseline {
    /// Reference scaled down until no wheel lifts.
    NoLift,
    /// Reference scaled down until the wheel lift reaches the limit [m].
    LimLift(f64),
    /// Four-iteration nonlinear governor.
    Nrg4,
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::NoLift => "nolift",
            Baseline::LimLift(_) => "limlift",
            Baseline::Nrg4 => "nrg4",
        }
    }
}

/// Largest amplitude scale in `[0, 1]` whose run keeps the maximum wheel
/// lift at or below `limit` (zero for no lift), found by bisection on the
/// monotone map `lift(scale)`.
pub fn find_safe_scale<F>(limit: f64, mut lift: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let ok = |l: f64| if limit == 0.0 { l <= 0.0 } else { l <= limit };
    if ok(lift(1.0)?) {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut lift_lo = 0.0;
    while hi - lo > 1e-3 || (limit > 0.0 && limit - lift_lo > 1e-3 && hi - lo > 1e-9) {
        let mid = 0.5 * (lo + hi);
        let l = lift(mid)?;
        if ok(l) {
            lo = mid;
            lift_lo = l;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub eta_lift: f64,
    pub max_wheel_lift: f64,
    pub chi_by_baseline: BTreeMap<String, f64>,
    pub eta_psi_by_baseline: BTreeMap<String, f64>,
    pub active_fraction: f64,
    pub solve_time_mean: f64,
    pub solve_time_max: f64,
}

/// Traces of one run needed for evaluation.
#[derive(Debug, Clone, Copy)]
pub struct RunTraces<'a> {
    pub reference: &'a [f64],
    pub applied: &'a [f64],
    pub yaw_rate: &'a [f64],
    pub active: &'a [bool],
    pub solve_times: &'a [f64],
    pub max_wheel_lift: f64,
}

/// Safe trajectory of one baseline.
#[derive(Debug, Clone, Copy)]
pub struct BaselineTraces<'a> {
    pub name: &'a str,
    pub command: &'a [f64],
    pub yaw_rate: &'a [f64],
}

pub fn evaluate_run(
    run: &RunTraces<'_>,
    baselines: &[BaselineTraces<'_>],
    yaw_gain0: f64,
    lift_limit: f64,
    dt: f64,
) -> Result<MetricsReport> {
    let mut chi = BTreeMap::new();
    let mut eta_psi = BTreeMap::new();
    for b in baselines {
        chi.insert(b.name.to_string(), conservatism(run.reference, run.applied, b.command, dt)?);
        eta_psi.insert(
            b.name.to_string(),
            turning_response(run.reference, run.yaw_rate, b.yaw_rate, yaw_gain0, dt)?,
        );
    }
    let n = run.active.len().max(1) as f64;
    let times = run.solve_times;
    Ok(MetricsReport {
        eta_lift: effectiveness(run.max_wheel_lift, lift_limit),
        max_wheel_lift: run.max_wheel_lift,
        chi_by_baseline: chi,
        eta_psi_by_baseline: eta_psi,
        active_fraction: run.active.iter().filter(|a| **a).count() as f64 / n,
        solve_time_mean: times.iter().sum::<f64>() / times.len().max(1) as f64,
        solve_time_max: times.iter().copied().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn effectiveness_examples() {
        assert_eq!(effectiveness(0.0, 0.05), 1.0);
        assert_eq!(effectiveness(0.05, 0.05), 0.0);
        assert!((effectiveness(0.045, 0.05) - 0.1).abs() < 1e-12);
        assert!(effectiveness(0.1, 0.05) < 0.0);
    }

    #[test]
    fn trapezoid_of_linear_ramp_is_exact() {
        let v: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        assert!((trapezoid(&v, 0.01) - 0.5).abs() < 1e-14);
        assert_eq!(trapezoid(&[3.0], 0.01), 0.0);
    }

    #[test]
    fn conservatism_step_traces() {
        // Reference 1 for 1 s; applied 0.5 on the second half; safe 0.8
        // throughout. Hand integrals with trapezoid weights on 101 samples.
        let dt = 0.01;
        let reference = vec![1.0; 101];
        let applied: Vec<f64> = (0..=100).map(|i| if i >= 50 { 0.5 } else { 1.0 }).collect();
        let safe = vec![0.8; 101];
        // |r - a| is 0.5 on interior samples 50..=99 and on the end sample.
        let int_ra = dt * (0.5 * 50.0 + 0.5 * 0.5);
        let int_rs = 0.2 * 1.0;
        let expected = (int_ra - int_rs) / 1.0;
        let chi = conservatism(&reference, &applied, &safe, dt).unwrap();
        assert!((chi - expected).abs() < 1e-12, "{chi} vs {expected}");
        assert!(conservatism(&reference, &safe, &safe, dt).unwrap().abs() < 1e-12);
        let passthrough = conservatism(&reference, &reference, &safe, dt).unwrap();
        assert!((passthrough + 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_reference_rejected() {
        let z = vec![0.0; 10];
        assert!(matches!(conservatism(&z, &z, &z, 0.01), Err(Error::ZeroReference)));
        assert!(matches!(turning_response(&z, &z, &z, 1.0, 0.01), Err(Error::ZeroReference)));
        assert!(conservatism(&z, &z[..5], &z, 0.01).is_err());
    }

    #[test]
    fn turning_response_signs() {
        let reference = vec![0.5; 11];
        let desired: Vec<f64> = reference.iter().map(|d| 0.4 * d).collect();
        let safe = vec![0.1; 11];
        assert_eq!(turning_response(&reference, &safe, &safe, 0.4, 0.01).unwrap(), 0.0);
        let better = turning_response(&reference, &desired, &safe, 0.4, 0.01).unwrap();
        assert!((better - 0.5).abs() < 1e-12);
    }

    #[test]
    fn safe_scale_matches_fine_grid() {
        // Lift grows as a hinge in the scale.
        let lift = |s: f64| Ok((s - 0.6137).max(0.0) * 0.4);
        let no_lift = find_safe_scale(0.0, lift).unwrap();
        assert!((no_lift - 0.6137).abs() <= 1e-3);
        assert!(no_lift <= 0.6137);
        let lim = find_safe_scale(0.05, lift).unwrap();
        assert!((lift(lim).unwrap() - 0.05).abs() <= 1e-3);
        assert!(no_lift < lim && lim < 1.0);
        assert_eq!(find_safe_scale(0.05, |_| Ok(0.0)).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn identities_hold(
            reference in prop::collection::vec(0.1f64..3.0, 5..50),
            noise in prop::collection::vec(-1.0f64..1.0, 50),
        ) {
            let applied: Vec<f64> = reference.iter().zip(&noise).map(|(r, n)| r + n).collect();
            let chi = conservatism(&reference, &applied, &applied, 0.01).unwrap();
            prop_assert!(chi.abs() < 1e-12);
            let eta = turning_response(&reference, &applied, &applied, 0.3, 0.01).unwrap();
            prop_assert!(eta.abs() < 1e-12);
        }
    }
}
