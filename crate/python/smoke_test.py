"""Smoke test for the rollgov Python bindings."""

import math
import tempfile
from pathlib import Path

import rollgov_py as rg


def main():
    # Open-loop plant: straight running stays straight.
    car = rg.Vehicle()
    state = rg.VehicleState.straight(20.0)
    for _ in range(100):
        state = car.step(state, 0.0, 0.01)
    assert abs(state.v) < 1e-12 and abs(car.ltr(state)) < 1e-12

    # Linear model and admissible set at a 100 deg trim.
    model = car.linearize(100.0, dt=0.01)
    assert len(model.a) == 4 and len(model.b[0]) == 1
    oinf = rg.AdmissibleSet.build(model)
    assert oinf.contains(0.0, [0.0] * 4)
    assert not oinf.contains(math.radians(200.0), [0.0] * 4)

    # QP with one active bound: min (x - 1)^2 subject to x <= 0.5.
    x, lam = rg.solve_qp([[2.0]], [-2.0], [[1.0]], [0.5])
    assert abs(x[0] - 0.5) < 1e-12 and abs(lam[0] - 1.0) < 1e-12

    # Manual stepping of a governor.
    cfg = rg.ExperimentConfig()
    cfg.governors = ["off", "lrg", "ecg"]
    cfg.amplitudes_deg = [150.0]
    cfg.record_timing = False
    setup = rg.Setup(cfg)
    gov = setup.governor("lrg")
    dec = gov.step(math.radians(10.0), rg.VehicleState.straight(20.0))
    assert not dec.active and dec.feasibility_level == 1

    # Closed-loop runs: ungoverned lifts a wheel, the governors do not.
    off = setup.run("off", 150.0)
    lrg = setup.run("lrg", 150.0)
    assert off.max_wheel_lift > 0.2, off.max_wheel_lift
    assert lrg.max_wheel_lift < 5e-4 and 0.0 < lrg.active_fraction < 1.0
    assert len(lrg) == len(lrg.applied) == len(lrg.ltr)

    with tempfile.TemporaryDirectory() as tmp:
        cfg.output_dir = tmp
        rows = rg.Setup(cfg).sweep(write=True)
        assert len(rows) == 3 and all(r["error"] is None for r in rows)
        for name in ("traces.csv", "decisions.csv", "metrics.csv", "manifest.json"):
            assert (Path(tmp) / name).stat().st_size > 0, name
    ecg = next(r for r in rows if r["governor"] == "ecg")
    print(
        f"off lift {off.max_wheel_lift:.3f} m; lrg lift {lrg.max_wheel_lift:.1e} m, "
        f"active {lrg.active_fraction:.3f}; ecg effectiveness {ecg['eta_lift']:.3f}, "
        f"chi vs nrg4 {ecg['chi']['nrg4']:.3f}"
    )
    print("smoke test passed")


if __name__ == "__main__":
    main()
