//! Python bindings for `rollgov`.

use std::path::PathBuf;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rollgov::governor::{Governor as CoreGovernor, GovernorDecision};
use rollgov::harness::{self, ExperimentConfig as CoreConfig, GovernorKind, NoiseSpec, RunOutcome, SimResult as CoreSim};
use rollgov::linear::{self, LinearModel as CoreModel};
use rollgov::oinf::{self, AdmissibleSet as CoreSet, OutputConstraints};
use rollgov::vehicle::{self, Vehicle as CoreVehicle, VehicleState as CoreState};
use rollgov::{metrics, qp, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::InvalidParameter { .. } | Error::Config(_) | Error::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn kind(name: &str) -> PyResult<GovernorKind> {
    name.parse().map_err(py_err)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

/// Experiment configuration with the defaults of the command-line tool.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct ExperimentConfig {
    inner: CoreConfig,
}

#[pymethods]
impl ExperimentConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: CoreConfig::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreConfig::from_toml(text).map_err(py_err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(py_err)
    }

    #[getter]
    fn amplitudes_deg(&self) -> Vec<f64> {
        self.inner.maneuver.amplitudes_deg.clone()
    }

    #[setter]
    fn set_amplitudes_deg(&mut self, a: Vec<f64>) {
        self.inner.maneuver.amplitudes_deg = a;
    }

    #[getter]
    fn governors(&self) -> Vec<String> {
        self.inner.governor.kinds.iter().map(ToString::to_string).collect()
    }

    #[setter]
    fn set_governors(&mut self, names: Vec<String>) -> PyResult<()> {
        self.inner.governor.kinds = names.iter().map(|n| kind(n)).collect::<PyResult<_>>()?;
        Ok(())
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[setter]
    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.inner.seeds = seeds;
    }

    /// Relative roll-angle estimation noise.
    #[getter]
    fn sigma_phi(&self) -> f64 {
        self.inner.noise.sigma_phi
    }

    #[setter]
    fn set_sigma_phi(&mut self, sigma: f64) {
        self.inner.noise = NoiseSpec::roll(sigma);
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.inner.output_dir.clone()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: PathBuf) {
        self.inner.output_dir = dir;
    }

    #[getter]
    fn record_timing(&self) -> bool {
        self.inner.record_timing
    }

    #[setter]
    fn set_record_timing(&mut self, on: bool) {
        self.inner.record_timing = on;
    }

    #[getter]
    fn ltr_lim(&self) -> f64 {
        self.inner.governor.ltr_lim
    }

    #[setter]
    fn set_ltr_lim(&mut self, lim: f64) {
        self.inner.governor.ltr_lim = lim;
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentConfig(governors={:?}, amplitudes_deg={:?}, seeds={:?})",
            self.governors(),
            self.inner.maneuver.amplitudes_deg,
            self.inner.seeds
        )
    }
}

/// Plant state in body-frame velocities and roll angles.
#[pyclass(from_py_object, get_all, set_all)]
#[derive(Clone)]
struct VehicleState {
    u: f64,
    v: f64,
    p: f64,
    r: f64,
    phi: f64,
    psi: f64,
    x: f64,
    y: f64,
    phi_uc: f64,
    p_uc: f64,
    contact: String,
}

impl VehicleState {
    fn from_core(s: &CoreState) -> Self {
        Self {
            u: s.u,
            v: s.v,
            p: s.p,
            r: s.r,
            phi: s.phi,
            psi: s.psi,
            x: s.x,
            y: s.y,
            phi_uc: s.phi_uc,
            p_uc: s.p_uc,
            contact: format!("{:?}", s.contact),
        }
    }

    fn to_core(&self) -> PyResult<CoreState> {
        let contact = match self.contact.as_str() {
            "Grounded" => vehicle::Contact::Grounded,
            "LeftLifted" => vehicle::Contact::LeftLifted,
            "RightLifted" => vehicle::Contact::RightLifted,
            "RolledOver" => vehicle::Contact::RolledOver,
            other => return Err(PyValueError::new_err(format!("unknown contact `{other}`"))),
        };
        Ok(CoreState {
            u: self.u,
            v: self.v,
            p: self.p,
            r: self.r,
            phi: self.phi,
            psi: self.psi,
            x: self.x,
            y: self.y,
            phi_uc: self.phi_uc,
            p_uc: self.p_uc,
            contact,
        })
    }
}

#[pymethods]
impl VehicleState {
    #[staticmethod]
    fn straight(u: f64) -> Self {
        Self::from_core(&CoreState::straight(u))
    }

    fn __repr__(&self) -> String {
        format!(
            "VehicleState(u={}, v={}, r={}, phi={}, contact={})",
            self.u, self.v, self.r, self.phi, self.contact
        )
    }
}

/// The nonlinear plant with default parameters.
#[pyclass]
struct Vehicle {
    inner: CoreVehicle,
}

#[pymethods]
impl Vehicle {
    #[new]
    fn new() -> PyResult<Self> {
        Ok(Self {
            inner: CoreVehicle::new(Default::default(), Default::default()).map_err(py_err)?,
        })
    }

    /// Advance `state` by `dt` seconds with steering-wheel angle `delta_sw` [rad].
    fn step(&self, state: &VehicleState, delta_sw: f64, dt: f64) -> PyResult<VehicleState> {
        let next = self.inner.step(&state.to_core()?, delta_sw, dt).map_err(py_err)?;
        Ok(VehicleState::from_core(&next))
    }

    fn ltr(&self, state: &VehicleState) -> PyResult<f64> {
        Ok(vehicle::compute_ltr(&state.to_core()?, &self.inner.params))
    }

    fn wheel_lift(&self, state: &VehicleState) -> PyResult<f64> {
        Ok(vehicle::wheel_lift(&state.to_core()?, &self.inner.params))
    }

    /// Linearise about the steady turn at steering-wheel angle `delta0_deg`;
    /// discretised with `dt` when given.
    #[pyo3(signature = (delta0_deg, speed = 20.0, dt = None))]
    fn linearize(&self, delta0_deg: f64, speed: f64, dt: Option<f64>) -> PyResult<LinearModel> {
        let v = &self.inner;
        let m = linear::linearize(&v.params, &v.tire, &v.config, speed, delta0_deg.to_radians()).map_err(py_err)?;
        let m = match dt {
            Some(dt) => linear::discretize(&m, dt).map_err(py_err)?,
            None => m,
        };
        Ok(LinearModel { inner: m })
    }
}

/// Lateral-roll model `x+ = A x + B u`, `y = y0 + C x + D u` in deviations
/// from a steady turn.
#[pyclass]
struct LinearModel {
    inner: CoreModel,
}

#[pymethods]
impl LinearModel {
    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.a)
    }

    #[getter]
    fn b(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.b)
    }

    #[getter]
    fn c(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.c)
    }

    #[getter]
    fn d(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.d)
    }

    #[getter]
    fn x0(&self) -> Vec<f64> {
        self.inner.x0.to_vec()
    }

    #[getter]
    fn delta0(&self) -> f64 {
        self.inner.delta0
    }

    #[getter]
    fn y0(&self) -> Vec<f64> {
        self.inner.y0.to_vec()
    }

    #[getter]
    fn dt(&self) -> Option<f64> {
        self.inner.dt
    }

    fn steady_state_gain(&self) -> PyResult<Vec<f64>> {
        Ok(self.inner.steady_state_gain().map_err(py_err)?.iter().copied().collect())
    }

    fn mirrored(&self) -> Self {
        Self {
            inner: self.inner.mirrored(),
        }
    }
}

/// Maximal output admissible set `{(u, x) : A z <= b}` of a discrete model.
#[pyclass]
struct AdmissibleSet {
    inner: CoreSet,
}

#[pymethods]
impl AdmissibleSet {
    #[staticmethod]
    #[pyo3(signature = (model, ltr_lim = 0.99, delta_sw_lim_deg = 180.0, horizon = 100, epsilon = 1e-3))]
    fn build(model: &LinearModel, ltr_lim: f64, delta_sw_lim_deg: f64, horizon: usize, epsilon: f64) -> PyResult<Self> {
        let yc = OutputConstraints::new(ltr_lim, delta_sw_lim_deg.to_radians()).map_err(py_err)?;
        Ok(Self {
            inner: oinf::build_oinf(&model.inner, &yc, horizon, epsilon).map_err(py_err)?,
        })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    /// `b - A z` for the command deviation `u` and state deviation `x`.
    fn margins(&self, u: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let z = self.inner.point(&[u], &x, &[]).map_err(py_err)?;
        Ok(self.inner.row_margins(&z).map_err(py_err)?.iter().copied().collect())
    }

    fn contains(&self, u: f64, x: Vec<f64>) -> PyResult<bool> {
        let z = self.inner.point(&[u], &x, &[]).map_err(py_err)?;
        self.inner.contains(&z).map_err(py_err)
    }
}

/// Outcome of one governor step.
#[pyclass(get_all)]
struct Decision {
    reference: f64,
    v: f64,
    active: bool,
    feasibility_level: i8,
    recovery: String,
    qp_invoked: bool,
}

impl From<GovernorDecision> for Decision {
    fn from(d: GovernorDecision) -> Self {
        Self {
            reference: d.reference,
            v: d.v,
            active: d.active,
            feasibility_level: d.feasibility_level,
            recovery: d.recovery_used.as_str().to_string(),
            qp_invoked: d.qp_invoked,
        }
    }
}

/// A governor driven step by step from Python.
#[pyclass]
struct Governor {
    inner: Mutex<Box<dyn CoreGovernor>>,
}

#[pymethods]
impl Governor {
    #[getter]
    fn name(&self) -> String {
        self.inner.lock().unwrap().name()
    }

    fn step(&self, reference: f64, state: &VehicleState) -> PyResult<Decision> {
        let s = state.to_core()?;
        Ok(self.inner.lock().unwrap().step(reference, &s).map_err(py_err)?.into())
    }

    fn reset(&self) {
        self.inner.lock().unwrap().reset();
    }
}

/// Closed-loop run: per-step traces and summary figures.
#[pyclass]
struct SimResult {
    inner: CoreSim,
}

#[pymethods]
impl SimResult {
    #[getter]
    fn max_wheel_lift(&self) -> f64 {
        self.inner.max_wheel_lift
    }

    #[getter]
    fn max_abs_ltr(&self) -> f64 {
        self.inner.max_abs_ltr
    }

    #[getter]
    fn max_abs_sprung_roll(&self) -> f64 {
        self.inner.max_abs_sprung_roll
    }

    #[getter]
    fn rolled_over(&self) -> bool {
        self.inner.rolled_over
    }

    #[getter]
    fn active_fraction(&self) -> f64 {
        self.inner.active_fraction()
    }

    #[getter]
    fn time(&self) -> Vec<f64> {
        self.inner.steps.iter().map(|s| s.t).collect()
    }

    #[getter]
    fn reference(&self) -> Vec<f64> {
        self.inner.reference()
    }

    #[getter]
    fn applied(&self) -> Vec<f64> {
        self.inner.applied()
    }

    #[getter]
    fn ltr(&self) -> Vec<f64> {
        self.inner.steps.iter().map(|s| s.ltr).collect()
    }

    #[getter]
    fn wheel_lift(&self) -> Vec<f64> {
        self.inner.steps.iter().map(|s| s.wheel_lift).collect()
    }

    #[getter]
    fn feasibility_levels(&self) -> Vec<i8> {
        self.inner.steps.iter().map(|s| s.decision.feasibility_level).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.steps.len()
    }
}

/// Plant, linear-model banks and admissible sets for one configuration.
#[pyclass]
struct Setup {
    inner: harness::Setup,
}

fn outcome_dict<'py>(py: Python<'py>, run: &RunOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("governor", run.point.governor.to_string())?;
    d.set_item("amplitude_deg", run.point.amplitude_deg)?;
    d.set_item("seed", run.point.seed)?;
    d.set_item("error", run.error())?;
    if let Ok(r) = &run.result {
        d.set_item("max_wheel_lift", r.max_wheel_lift)?;
        d.set_item("active_fraction", r.active_fraction())?;
    }
    if let Some(Ok(m)) = &run.metrics {
        d.set_item("eta_lift", m.eta_lift)?;
        d.set_item("chi", m.chi_by_baseline.clone())?;
        d.set_item("eta_psi", m.eta_psi_by_baseline.clone())?;
    }
    Ok(d)
}

#[pymethods]
impl Setup {
    #[new]
    #[pyo3(signature = (config = None))]
    fn new(py: Python<'_>, config: Option<ExperimentConfig>) -> PyResult<Self> {
        let cfg = config.map_or_else(CoreConfig::default, |c| c.inner);
        let inner = py.detach(|| harness::Setup::new(cfg)).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            inner: self.inner.config.clone(),
        }
    }

    /// One Sine-with-Dwell run of `governor` at `amplitude_deg`.
    #[pyo3(signature = (governor, amplitude_deg, seed = 1, noisy = false))]
    fn run(&self, py: Python<'_>, governor: &str, amplitude_deg: f64, seed: u64, noisy: bool) -> PyResult<SimResult> {
        let k = kind(governor)?;
        let man = self.inner.maneuver(amplitude_deg);
        let inner = py.detach(|| self.inner.run(k, &man, seed, noisy)).map_err(py_err)?;
        Ok(SimResult { inner })
    }

    /// A fresh governor for stepping by hand.
    fn governor(&self, name: &str) -> PyResult<Governor> {
        Ok(Governor {
            inner: Mutex::new(self.inner.governor(kind(name)?).map_err(py_err)?),
        })
    }

    /// NoLift and LimLift scales of the reference at `amplitude_deg`.
    fn baselines<'py>(&self, py: Python<'py>, amplitude_deg: f64) -> PyResult<Bound<'py, PyDict>> {
        let b = py.detach(|| self.inner.baselines(amplitude_deg)).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("nolift_scale", b.nolift_scale)?;
        d.set_item("limlift_scale", b.limlift_scale)?;
        d.set_item("nrg4_max_wheel_lift", b.nrg4.max_wheel_lift)?;
        Ok(d)
    }

    /// Every configured governor, amplitude and seed. Writes the CSV files
    /// and manifest to the output directory when `write` is set.
    #[pyo3(signature = (noisy = false, write = false))]
    fn sweep<'py>(&self, py: Python<'py>, noisy: bool, write: bool) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let out = py.detach(|| self.inner.sweep(noisy)).map_err(py_err)?;
        if write {
            let cfg = &self.inner.config;
            harness::write_sweep(&cfg.output_dir, cfg, "python", &out, noisy).map_err(py_err)?;
        }
        out.runs.iter().map(|r| outcome_dict(py, r)).collect()
    }
}

/// Solve `min 0.5 x'Hx + f'x` subject to `A x <= b`; returns `(x, lambda)`.
#[pyfunction]
fn solve_qp(h: Vec<Vec<f64>>, f: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let h = matrix(&h)?;
    let a = if a.is_empty() { DMatrix::zeros(0, f.len()) } else { matrix(&a)? };
    let sol = qp::solve_qp(&h, &DVector::from_vec(f), &a, &DVector::from_vec(b)).map_err(py_err)?;
    Ok((sol.x.iter().copied().collect(), sol.lambda.iter().copied().collect()))
}

#[pyfunction]
fn effectiveness(max_lift: f64, lift_limit: f64) -> f64 {
    metrics::effectiveness(max_lift, lift_limit)
}

/// Normalised steering reduction of `applied` relative to `safe`.
#[pyfunction]
fn conservatism(reference: Vec<f64>, applied: Vec<f64>, safe: Vec<f64>, dt: f64) -> PyResult<f64> {
    metrics::conservatism(&reference, &applied, &safe, dt).map_err(py_err)
}

/// Sine-with-Dwell steering-wheel angle [rad] at time `t`.
#[pyfunction]
fn sine_with_dwell(amplitude_deg: f64, t: f64) -> f64 {
    rollgov::maneuver::ManeuverSpec::sine_with_dwell_deg(amplitude_deg).reference(t)
}

#[pymodule]
fn rollgov_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ExperimentConfig>()?;
    m.add_class::<VehicleState>()?;
    m.add_class::<Vehicle>()?;
    m.add_class::<LinearModel>()?;
    m.add_class::<AdmissibleSet>()?;
    m.add_class::<Decision>()?;
    m.add_class::<Governor>()?;
    m.add_class::<SimResult>()?;
    m.add_class::<Setup>()?;
    m.add_function(wrap_pyfunction!(solve_qp, m)?)?;
    m.add_function(wrap_pyfunction!(effectiveness, m)?)?;
    m.add_function(wrap_pyfunction!(conservatism, m)?)?;
    m.add_function(wrap_pyfunction!(sine_with_dwell, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trips_through_rows() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = rows(&m);
        assert_eq!(r, vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(matrix(&r).unwrap(), m);
    }

    #[test]
    fn governor_names_parse() {
        assert_eq!(kind("nrg4").unwrap(), GovernorKind::Nrg(4));
        assert_eq!(kind("lrg").unwrap(), GovernorKind::Lrg(None));
    }
}
