use rollgov::harness::{ExperimentConfig, GovernorKind, NoiseSpec, Setup};

fn config(kinds: Vec<GovernorKind>, amplitudes: Vec<f64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.governor.kinds = kinds;
    cfg.maneuver.amplitudes_deg = amplitudes;
    cfg.record_timing = false;
    cfg
}

#[test]
fn ungoverned_lift_grows_with_amplitude() {
    let setup = Setup::for_kinds(config(vec![GovernorKind::Off], vec![]), &[GovernorKind::Off]).unwrap();
    let lifts: Vec<f64> = [10.0, 60.0, 100.0, 130.0, 160.0]
        .iter()
        .map(|a| setup.run(GovernorKind::Off, &setup.maneuver(*a), 0, false).unwrap().max_wheel_lift)
        .collect();
    assert_eq!(lifts[0], 0.0);
    assert!(lifts.windows(2).all(|w| w[1] >= w[0]), "{lifts:?}");
    assert!(lifts[4] > 0.2);
}

#[test]
fn small_steering_passes_through_every_governor() {
    let kinds = vec![GovernorKind::Lrg(None), GovernorKind::Ecg, GovernorKind::Nrg(4)];
    let setup = Setup::new(config(kinds.clone(), vec![10.0])).unwrap();
    let man = setup.maneuver(10.0);
    for kind in kinds {
        let run = setup.run(kind, &man, 0, false).unwrap();
        assert_eq!(run.active_fraction(), 0.0, "{kind}");
        assert_eq!(run.reference(), run.applied(), "{kind}");
    }
}

#[test]
fn governors_prevent_lift_at_high_amplitude() {
    let kinds = vec![GovernorKind::Lrg(None), GovernorKind::Ecg];
    let out = Setup::new(config(kinds, vec![150.0])).unwrap().sweep(false).unwrap();
    assert!(!out.any_failed());
    for run in &out.runs {
        let res = run.result.as_ref().unwrap();
        assert!(res.max_wheel_lift < 5e-4, "{}: {}", run.point.governor, res.max_wheel_lift);
        assert!(res.active_fraction() > 0.0);
    }
}

#[test]
fn noise_is_reproducible_and_seed_dependent() {
    let mut cfg = config(vec![GovernorKind::Lrg(None)], vec![140.0]);
    cfg.noise = NoiseSpec::roll(0.2);
    let setup = Setup::new(cfg).unwrap();
    let man = setup.maneuver(140.0);
    let lrg = GovernorKind::Lrg(None);
    let a = setup.run(lrg, &man, 3, true).unwrap().applied();
    let b = setup.run(lrg, &man, 3, true).unwrap().applied();
    let c = setup.run(lrg, &man, 4, true).unwrap().applied();
    let clean = setup.run(lrg, &man, 3, false).unwrap().applied();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_ne!(a, clean);
}

#[test]
fn shipped_config_parses() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/noise.toml");
    let cfg = ExperimentConfig::load(path).unwrap();
    assert_eq!(cfg.noise, NoiseSpec::roll(0.2));
    assert_eq!(cfg.governor.kinds.len(), 4);
    assert_eq!(cfg.seeds.len(), 8);
}
