//! Polyhedral inner approximations of the maximal output admissible set.
//!
//! A set is stored as `A_O z <= b_O`, where the decision vector `z` is laid
//! out as `(command, state, disturbance)`. Rows come in blocks of
//! `rows(A_y)`: one block per prediction step `k = 0..=N`, then a
//! steady-state block tightened by `(1 - epsilon)`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laguerre::LaguerreBasis;
use crate::linalg;
use crate::linear::LinearModel;

/// Default steady-state tightening.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Default prediction horizon [steps].
pub const DEFAULT_HORIZON: usize = 100;

/// Output constraint polytope `A_y y <= b_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputConstraints {
    pub a_y: DMatrix<f64>,
    pub b_y: DVector<f64>,
    pub ltr_lim: f64,
    pub delta_sw_lim: f64,
}

impl OutputConstraints {
    /// Symmetric bounds on `(LTR, delta_SW)`.
    pub fn new(ltr_lim: f64, delta_sw_lim: f64) -> Result<Self> {
        if !(ltr_lim > 0.0 && delta_sw_lim > 0.0) {
            return Err(Error::InvalidParameter {
                name: "output limits",
                reason: format!("must be positive, got LTR {ltr_lim}, delta_SW {delta_sw_lim}"),
            });
        }
        let a_y = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b_y = DVector::from_column_slice(&[ltr_lim, ltr_lim, delta_sw_lim, delta_sw_lim]);
        Ok(Self {
            a_y,
            b_y,
            ltr_lim,
            delta_sw_lim,
        })
    }

    /// General polytope, for outputs other than `(LTR, delta_SW)`.
    pub fn from_polytope(a_y: DMatrix<f64>, b_y: DVector<f64>) -> Result<Self> {
        if a_y.nrows() != b_y.len() {
            return Err(Error::DimensionMismatch {
                expected: a_y.nrows(),
                got: b_y.len(),
            });
        }
        if b_y.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::InvalidInput("b_y must be strictly positive".into()));
        }
        Ok(Self {
            a_y,
            b_y,
            ltr_lim: f64::NAN,
            delta_sw_lim: f64::NAN,
        })
    }

    pub fn rows(&self) -> usize {
        self.a_y.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.a_y.ncols()
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        (&self.a_y * y - &self.b_y).iter().all(|v| *v <= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetVariant {
    Plain,
    DisturbanceAugmented,
    EcgAugmented,
    /// Command-governor set with disturbance columns appended.
    EcgDisturbanceAugmented,
}

impl SetVariant {
    fn name(self) -> &'static str {
        match self {
            SetVariant::Plain => "plain",
            SetVariant::DisturbanceAugmented => "disturbance_augmented",
            SetVariant::EcgAugmented => "ecg_augmented",
            SetVariant::EcgDisturbanceAugmented => "ecg_disturbance_augmented",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "plain" => SetVariant::Plain,
            "disturbance_augmented" => SetVariant::DisturbanceAugmented,
            "ecg_augmented" => SetVariant::EcgAugmented,
            "ecg_disturbance_augmented" => SetVariant::EcgDisturbanceAugmented,
            other => return Err(Error::InvalidInput(format!("unknown set variant `{other}`"))),
        })
    }
}

/// `{ z : A z <= b }` with block bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSet {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub horizon: usize,
    pub epsilon: f64,
    pub variant: SetVariant,
    /// Rows per block (`rows(A_y)`).
    pub block_rows: usize,
    pub n_cmd: usize,
    pub n_state: usize,
    pub n_dist: usize,
    pub model_id: String,
}

/// Short identifier of a model's operating point.
pub fn model_id(model: &LinearModel) -> String {
    format!(
        "delta0={:.3}deg,u={:.3},dt={}",
        model.delta0.to_degrees(),
        model.speed,
        model.dt.map_or("cont".to_string(), |d| d.to_string())
    )
}

/// Stack the prediction rows for `x+ = A x + B u`, `y = y0 + C x + D u`
/// under constant `u`: block `k` holds `A_y (C S_k + D)` on the command
/// columns and `A_y C A^k` on the state columns, with
/// `S_k = (I - A)^-1 (I - A^k) B` accumulated as `sum_{i<k} A^i B`.
#[allow(clippy::too_many_arguments)]
pub fn stack_rows(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    y0: &DVector<f64>,
    yc: &OutputConstraints,
    horizon: usize,
    epsilon: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = a.nrows();
    let m = b.ncols();
    let l = yc.rows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.ncols(),
        });
    }
    if c.nrows() != yc.outputs() || y0.len() != yc.outputs() {
        return Err(Error::DimensionMismatch {
            expected: yc.outputs(),
            got: c.nrows(),
        });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: format!("must lie in (0, 1), got {epsilon}"),
        });
    }
    let rho = linalg::spectral_radius(a);
    if rho >= 1.0 {
        return Err(Error::NotSchur(rho));
    }

    let rows = l * (horizon + 2);
    let mut a_o = DMatrix::zeros(rows, m + n);
    let mut b_o = DVector::zeros(rows);
    let offset = &yc.b_y - &yc.a_y * y0;

    let mut a_pow = DMatrix::<f64>::identity(n, n);
    let mut s_k = DMatrix::<f64>::zeros(n, m);
    for k in 0..=horizon {
        let cmd = &yc.a_y * (c * &s_k + d);
        let st = &yc.a_y * (c * &a_pow);
        a_o.view_mut((k * l, 0), (l, m)).copy_from(&cmd);
        a_o.view_mut((k * l, m), (l, n)).copy_from(&st);
        b_o.rows_mut(k * l, l).copy_from(&offset);
        s_k += &a_pow * b;
        a_pow = &a_pow * a;
    }

    let i_minus_a = DMatrix::<f64>::identity(n, n) - a;
    let gain = i_minus_a
        .lu()
        .solve(b)
        .ok_or(Error::Singular("I - A"))?;
    let h = c * gain + d;
    let r0 = (horizon + 1) * l;
    a_o.view_mut((r0, 0), (l, m)).copy_from(&(&yc.a_y * h));
    b_o.rows_mut(r0, l)
        .copy_from(&(&yc.b_y * (1.0 - epsilon) - &yc.a_y * y0));
    Ok((a_o, b_o))
}

/// Plain set over `(u, x)` in deviation coordinates of `model`.
pub fn build_oinf(
    model: &LinearModel,
    yc: &OutputConstraints,
    horizon: usize,
    epsilon: f64,
) -> Result<AdmissibleSet> {
    if !model.is_discrete() {
        return Err(Error::InvalidInput("admissible sets need a discrete model".into()));
    }
    let y0 = DVector::from_column_slice(&model.y0);
    let (a, b) = stack_rows(&model.a, &model.b, &model.c, &model.d, &y0, yc, horizon, epsilon)?;
    Ok(AdmissibleSet {
        a,
        b,
        horizon,
        epsilon,
        variant: SetVariant::Plain,
        block_rows: yc.rows(),
        n_cmd: model.b.ncols(),
        n_state: model.a.nrows(),
        n_dist: 0,
        model_id: model_id(model),
    })
}

/// Set over `(rho, x, x̄)` for the plant driven by `v = C̄ x̄ + rho`.
pub fn build_ecg_oinf(
    model: &LinearModel,
    yc: &OutputConstraints,
    basis: &LaguerreBasis,
    horizon: usize,
    epsilon: f64,
) -> Result<AdmissibleSet> {
    if !model.is_discrete() {
        return Err(Error::InvalidInput("admissible sets need a discrete model".into()));
    }
    if !basis.is_schur() {
        return Err(Error::NotSchur(basis.alpha));
    }
    let (a_aug, b_aug, c_aug, d_aug) = ecg_augmented_system(model, basis);
    let y0 = DVector::from_column_slice(&model.y0);
    let (a, b) = stack_rows(&a_aug, &b_aug, &c_aug, &d_aug, &y0, yc, horizon, epsilon)?;
    Ok(AdmissibleSet {
        a,
        b,
        horizon,
        epsilon,
        variant: SetVariant::EcgAugmented,
        block_rows: yc.rows(),
        n_cmd: model.b.ncols(),
        n_state: model.a.nrows() + basis.depth,
        n_dist: 0,
        model_id: format!("{};ecg(alpha={},depth={})", model_id(model), basis.alpha, basis.depth),
    })
}

/// Augmented matrices for state `(x, x̄)` and input `rho`.
pub fn ecg_augmented_system(
    model: &LinearModel,
    basis: &LaguerreBasis,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = model.a.nrows();
    let q = basis.depth;
    let a_bar = basis.a_bar();
    let c_bar = basis.c_bar();
    let mut a = DMatrix::zeros(n + q, n + q);
    a.view_mut((0, 0), (n, n)).copy_from(&model.a);
    a.view_mut((0, n), (n, q)).copy_from(&(&model.b * &c_bar));
    a.view_mut((n, n), (q, q)).copy_from(&a_bar);
    let mut b = DMatrix::zeros(n + q, 1);
    b.view_mut((0, 0), (n, 1)).copy_from(&model.b);
    let p = model.c.nrows();
    let mut c = DMatrix::zeros(p, n + q);
    c.view_mut((0, 0), (p, n)).copy_from(&model.c);
    c.view_mut((0, n), (p, q)).copy_from(&(&model.d * &c_bar));
    (a, b, c, model.d.clone())
}

impl AdmissibleSet {
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// Number of row blocks, prediction steps plus the steady-state block.
    pub fn blocks(&self) -> usize {
        self.rows() / self.block_rows
    }

    /// Append disturbance columns equal to `A_y` in every block.
    pub fn augment_disturbance(&self, a_y: &DMatrix<f64>) -> Result<Self> {
        let variant = match self.variant {
            SetVariant::Plain => SetVariant::DisturbanceAugmented,
            SetVariant::EcgAugmented => SetVariant::EcgDisturbanceAugmented,
            _ => return Err(Error::AlreadyAugmented),
        };
        if a_y.nrows() != self.block_rows {
            return Err(Error::DimensionMismatch {
                expected: self.block_rows,
                got: a_y.nrows(),
            });
        }
        let l = a_y.ncols();
        let mut a = DMatrix::zeros(self.rows(), self.cols() + l);
        a.view_mut((0, 0), (self.rows(), self.cols())).copy_from(&self.a);
        for blk in 0..self.blocks() {
            a.view_mut((blk * self.block_rows, self.cols()), (self.block_rows, l))
                .copy_from(a_y);
        }
        Ok(Self {
            a,
            variant,
            n_dist: l,
            ..self.clone()
        })
    }

    fn check_dim(&self, point: &DVector<f64>) -> Result<()> {
        if point.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.cols(),
                got: point.len(),
            });
        }
        Ok(())
    }

    /// `b - A z`.
    pub fn row_margins(&self, point: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(point)?;
        Ok(&self.b - &self.a * point)
    }

    pub fn contains(&self, point: &DVector<f64>) -> Result<bool> {
        Ok(self.row_margins(point)?.iter().all(|m| *m >= 0.0))
    }

    /// Largest `t >= 0` keeping `point + t dir` inside, starting from a
    /// member. Infinite when the ray never leaves the set.
    pub fn ray_limit(&self, point: &DVector<f64>, dir: &DVector<f64>) -> Result<f64> {
        let margins = self.row_margins(point)?;
        self.check_dim(dir)?;
        let rate = &self.a * dir;
        Ok(margins
            .iter()
            .zip(rate.iter())
            .filter(|(_, r)| **r > 0.0)
            .map(|(m, r)| m.max(0.0) / r)
            .fold(f64::INFINITY, f64::min))
    }

    /// Same rows with `b` scaled by `(1 + eps)`.
    pub fn relaxed(&self, eps: f64) -> Self {
        Self {
            b: &self.b * (1.0 + eps),
            ..self.clone()
        }
    }

    /// Assemble a decision vector from its parts.
    pub fn point(&self, cmd: &[f64], state: &[f64], dist: &[f64]) -> Result<DVector<f64>> {
        if cmd.len() != self.n_cmd || state.len() != self.n_state || dist.len() != self.n_dist {
            return Err(Error::DimensionMismatch {
                expected: self.cols(),
                got: cmd.len() + state.len() + dist.len(),
            });
        }
        Ok(DVector::from_iterator(
            self.cols(),
            cmd.iter().chain(state).chain(dist).copied(),
        ))
    }

    /// Serialise to a line-oriented text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# admissible set");
        let _ = writeln!(out, "model {}", self.model_id);
        let _ = writeln!(out, "variant {}", self.variant.name());
        let _ = writeln!(out, "horizon {}", self.horizon);
        let _ = writeln!(out, "epsilon {}", self.epsilon);
        let _ = writeln!(out, "block_rows {}", self.block_rows);
        let _ = writeln!(out, "columns {} {} {}", self.n_cmd, self.n_state, self.n_dist);
        let _ = writeln!(out, "rows {}", self.rows());
        for i in 0..self.rows() {
            let row: Vec<String> = self.a.row(i).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{} | {}", row.join(" "), self.b[i]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::InvalidInput(format!("malformed set file: {what}"));
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(key))?;
            line.strip_prefix(key)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| bad(key))
        };
        let model_id = field("model")?;
        let variant = SetVariant::parse(&field("variant")?)?;
        let num = |s: String, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let horizon = num(field("horizon")?, "horizon")? as usize;
        let epsilon = num(field("epsilon")?, "epsilon")?;
        let block_rows = num(field("block_rows")?, "block_rows")? as usize;
        let cols: Vec<usize> = field("columns")?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("columns")))
            .collect::<Result<_>>()?;
        let [n_cmd, n_state, n_dist] = cols[..] else {
            return Err(bad("columns"));
        };
        let rows = num(field("rows")?, "rows")? as usize;
        let ncols = n_cmd + n_state + n_dist;
        let mut a = DMatrix::zeros(rows, ncols);
        let mut b = DVector::zeros(rows);
        for i in 0..rows {
            let line = lines.next().ok_or_else(|| bad("row count"))?;
            let (lhs, rhs) = line.split_once('|').ok_or_else(|| bad("row separator"))?;
            let vals: Vec<f64> = lhs
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("row value")))
                .collect::<Result<_>>()?;
            if vals.len() != ncols {
                return Err(Error::DimensionMismatch {
                    expected: ncols,
                    got: vals.len(),
                });
            }
            for (j, v) in vals.into_iter().enumerate() {
                a[(i, j)] = v;
            }
            b[i] = rhs.trim().parse().map_err(|_| bad("bound"))?;
        }
        Ok(Self {
            a,
            b,
            horizon,
            epsilon,
            variant,
            block_rows,
            n_cmd,
            n_state,
            n_dist,
            model_id,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Simulate `(u, x)` forward under constant `u` for `steps` steps and
/// return the first step whose output leaves `Y`.
pub fn first_violation(
    model: &LinearModel,
    yc: &OutputConstraints,
    u: f64,
    x: &DVector<f64>,
    steps: usize,
) -> Option<usize> {
    let y0 = DVector::from_column_slice(&model.y0[..model.c.nrows()]);
    let mut x = x.clone();
    for k in 0..=steps {
        let y = &y0 + &model.c * &x + &model.d * u;
        if !yc.contains(&y) {
            return Some(k);
        }
        x = &model.a * x + &model.b * u;
    }
    None
}

/// Sampled check that the horizon is long enough: draws members of a plain
/// set along random rays from the origin and counts those whose constant-
/// command response leaves `Y` within `steps` steps.
pub fn finite_determination_violations<R: rand::Rng>(
    model: &LinearModel,
    yc: &OutputConstraints,
    set: &AdmissibleSet,
    samples: usize,
    steps: usize,
    rng: &mut R,
) -> Result<usize> {
    if set.variant != SetVariant::Plain {
        return Err(Error::InvalidInput("finite-determination check needs a plain set".into()));
    }
    let origin = DVector::zeros(set.cols());
    let mut violations = 0;
    for _ in 0..samples {
        let dir = DVector::from_fn(set.cols(), |_, _| rng.random_range(-1.0..1.0));
        let t = set.ray_limit(&origin, &dir)?;
        if !t.is_finite() {
            continue;
        }
        let z = &dir * (t * rng.random_range(0.0..1.0));
        let x = z.rows(set.n_cmd, set.n_state).into_owned();
        if first_violation(model, yc, z[0], &x, steps).is_some() {
            violations += 1;
        }
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_model(a: f64, b: f64, c: f64, d: f64) -> LinearModel {
        LinearModel {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
            c: DMatrix::from_element(1, 1, c),
            d: DMatrix::from_element(1, 1, d),
            x0: [0.0; 4],
            delta0: 0.0,
            y0: [0.0; 2],
            speed: 1.0,
            dt: Some(1.0),
        }
    }

    fn unit_box() -> OutputConstraints {
        OutputConstraints::from_polytope(
            DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            DVector::from_column_slice(&[1.0, 1.0]),
        )
        .unwrap()
    }

    fn scalar_set(model: &LinearModel, yc: &OutputConstraints, n: usize, eps: f64) -> AdmissibleSet {
        let (a, b) = stack_rows(
            &model.a,
            &model.b,
            &model.c,
            &model.d,
            &DVector::zeros(1),
            yc,
            n,
            eps,
        )
        .unwrap();
        AdmissibleSet {
            a,
            b,
            horizon: n,
            epsilon: eps,
            variant: SetVariant::Plain,
            block_rows: yc.rows(),
            n_cmd: 1,
            n_state: 1,
            n_dist: 0,
            model_id: "toy".into(),
        }
    }

    /// Hand-stacked rows for a = 0.5, b = 1, c = 1, d = 0, |y| <= 1, N = 2.
    #[test]
    fn scalar_toy_rows() {
        let m = scalar_model(0.5, 1.0, 1.0, 0.0);
        let set = scalar_set(&m, &unit_box(), 2, 0.01);
        #[rustfmt::skip]
        let expected_a = [
            [0.0, 1.0], [0.0, -1.0],   // k = 0: y = x
            [1.0, 0.5], [-1.0, -0.5],  // k = 1: y = u + 0.5 x
            [1.5, 0.25], [-1.5, -0.25], // k = 2: y = 1.5 u + 0.25 x
            [2.0, 0.0], [-2.0, 0.0],   // steady state: y = 2 u
        ];
        let expected_b = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.99, 0.99];
        assert_eq!(set.rows(), 8);
        for i in 0..8 {
            for j in 0..2 {
                assert!((set.a[(i, j)] - expected_a[i][j]).abs() < 1e-15, "row {i}");
            }
            assert!((set.b[i] - expected_b[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn first_block_is_feedthrough_and_output_map() {
        let (p, t, c) = (
            crate::params::VehicleParams::default(),
            crate::params::TireParams::default(),
            crate::vehicle::PlantConfig::default(),
        );
        let m = crate::linear::discretize(
            &crate::linear::linearize(&p, &t, &c, 20.0, 0.5).unwrap(),
            0.01,
        )
        .unwrap();
        let yc = OutputConstraints::new(0.99, std::f64::consts::PI).unwrap();
        let set = build_oinf(&m, &yc, 10, DEFAULT_EPSILON).unwrap();
        assert_eq!(set.rows(), 4 * 12);
        let ad = &yc.a_y * &m.d;
        let ac = &yc.a_y * &m.c;
        assert!((set.a.view((0, 0), (4, 1)) - ad).abs().max() < 1e-15);
        assert!((set.a.view((0, 1), (4, 4)) - ac).abs().max() < 1e-15);
        let trim = set.point(&[0.0], &[0.0; 4], &[]).unwrap();
        assert!(set.row_margins(&trim).unwrap().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn non_schur_model_rejected() {
        let m = scalar_model(1.0, 1.0, 1.0, 0.0);
        let r = stack_rows(&m.a, &m.b, &m.c, &m.d, &DVector::zeros(1), &unit_box(), 5, 0.01);
        assert!(matches!(r, Err(Error::NotSchur(_))));
        let bad_eps = stack_rows(
            &DMatrix::from_element(1, 1, 0.5),
            &m.b,
            &m.c,
            &m.d,
            &DVector::zeros(1),
            &unit_box(),
            5,
            0.0,
        );
        assert!(bad_eps.is_err());
    }

    #[test]
    fn disturbance_columns_shift_interval() {
        let m = scalar_model(0.5, 1.0, 1.0, 0.0);
        let yc = unit_box();
        let set = scalar_set(&m, &yc, 2, 0.01);
        let aug = set.augment_disturbance(&yc.a_y).unwrap();
        assert_eq!(aug.cols(), set.cols() + 1);
        assert!(matches!(aug.augment_disturbance(&yc.a_y), Err(Error::AlreadyAugmented)));
        // Feasible u interval at x = 0 from the stacked rows.
        let interval = |s: &AdmissibleSet, d: f64| {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..s.rows() {
                let coef = s.a[(i, 0)];
                let rest = if s.n_dist > 0 { s.a[(i, 2)] * d } else { 0.0 };
                let rhs = s.b[i] - rest;
                if coef > 0.0 {
                    hi = hi.min(rhs / coef);
                } else if coef < 0.0 {
                    lo = lo.max(rhs / coef);
                }
            }
            (lo, hi)
        };
        let (lo0, hi0) = interval(&set, 0.0);
        let (lo1, hi1) = interval(&aug, 0.2);
        // Binding upper row is the steady block: 2u + d <= 0.99.
        assert!((hi0 - 0.495).abs() < 1e-15);
        assert!((hi1 - (0.99 - 0.2) / 2.0).abs() < 1e-15);
        assert!((lo1 - (-(0.99 + 0.2) / 2.0)).abs() < 1e-15);
        assert!((lo0 + 0.495).abs() < 1e-15);
        // d = 0 gives identical decisions.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let u = rand::Rng::random_range(&mut rng, -1.0..1.0);
            let x = rand::Rng::random_range(&mut rng, -2.0..2.0);
            let plain = set.contains(&DVector::from_column_slice(&[u, x])).unwrap();
            let with_d = aug.contains(&DVector::from_column_slice(&[u, x, 0.0])).unwrap();
            assert_eq!(plain, with_d);
        }
    }

    #[test]
    fn ecg_toy_rows() {
        // Scalar plant x+ = 0.5 x + v, y = x; two-state basis with alpha = 0.
        let m = scalar_model(0.5, 1.0, 1.0, 0.0);
        let basis = LaguerreBasis::new(0.0, 2).unwrap();
        let (a, b, c, d) = ecg_augmented_system(&m, &basis);
        // v = x̄1 + rho, x̄ shifts: x̄1+ = x̄2, x̄2+ = 0.
        let a_exp = DMatrix::from_row_slice(3, 3, &[0.5, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(a, a_exp);
        assert_eq!(b, DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]));
        assert_eq!(c, DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]));
        assert_eq!(d, DMatrix::from_element(1, 1, 0.0));
        let yc = unit_box();
        let (ao, bo) = stack_rows(&a, &b, &c, &d, &DVector::zeros(1), &yc, 2, 0.01).unwrap();
        // Rows for y_k >= ... only the '+' rows checked: columns (rho, x, x̄1, x̄2).
        let plus = [
            [0.0, 1.0, 0.0, 0.0],  // y0 = x
            [1.0, 0.5, 1.0, 0.0],  // y1 = 0.5x + x̄1 + rho
            [1.5, 0.25, 0.5, 1.0], // y2 = 0.25x + 0.5x̄1 + x̄2 + 1.5 rho
            [2.0, 0.0, 0.0, 0.0],
        ];
        for (k, row) in plus.iter().enumerate() {
            for j in 0..4 {
                assert!((ao[(2 * k, j)] - row[j]).abs() < 1e-15, "block {k} col {j}");
            }
        }
        assert!((bo[6] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn ecg_set_with_zero_virtual_state_matches_plain() {
        let (p, t, c) = (
            crate::params::VehicleParams::default(),
            crate::params::TireParams::default(),
            crate::vehicle::PlantConfig::default(),
        );
        let m = crate::linear::discretize(
            &crate::linear::linearize(&p, &t, &c, 20.0, 0.0).unwrap(),
            0.01,
        )
        .unwrap();
        let yc = OutputConstraints::new(0.99, std::f64::consts::PI).unwrap();
        let plain = build_oinf(&m, &yc, 100, DEFAULT_EPSILON).unwrap();
        let basis = LaguerreBasis::new(0.9, 4).unwrap();
        let ecg = build_ecg_oinf(&m, &yc, &basis, 100, DEFAULT_EPSILON).unwrap();
        assert_eq!(ecg.cols(), 1 + 4 + 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let rho = rand::Rng::random_range(&mut rng, -3.0..3.0);
            let x: Vec<f64> = (0..4).map(|_| rand::Rng::random_range(&mut rng, -0.3..0.3)).collect();
            let zp = plain.point(&[rho], &x, &[]).unwrap();
            let mut xa = x.clone();
            xa.extend([0.0; 4]);
            let ze = ecg.point(&[rho], &xa, &[]).unwrap();
            assert_eq!(plain.contains(&zp).unwrap(), ecg.contains(&ze).unwrap());
        }
        let marginal = LaguerreBasis::new(1.0, 4).unwrap();
        assert!(build_ecg_oinf(&m, &yc, &marginal, 10, DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn ray_limit_finds_first_zero_margin() {
        let m = scalar_model(0.5, 1.0, 1.0, 0.0);
        let set = scalar_set(&m, &unit_box(), 2, 0.01);
        let origin = DVector::zeros(2);
        let dir = DVector::from_column_slice(&[1.0, 0.0]);
        let t = set.ray_limit(&origin, &dir).unwrap();
        assert!((t - 0.495).abs() < 1e-15);
        let edge = &dir * t;
        let margins = set.row_margins(&edge).unwrap();
        assert!(margins.min().abs() < 1e-15);
        assert!(!set.contains(&(&dir * (t + 1e-9))).unwrap());
    }

    #[test]
    fn violated_probe_flags_predicted_row() {
        let m = scalar_model(0.5, 1.0, 1.0, 0.0);
        let yc = unit_box();
        let set = scalar_set(&m, &yc, 4, 0.01);
        // x = 0, u = 0.8: y1 = 0.8, y2 = 1.2 -> first violation at k = 2.
        let z = DVector::from_column_slice(&[0.8, 0.0]);
        let k = first_violation(&m, &yc, 0.8, &DVector::zeros(1), 4).unwrap();
        assert_eq!(k, 2);
        let margins = set.row_margins(&z).unwrap();
        let first_neg = margins.iter().position(|v| *v < 0.0).unwrap();
        assert_eq!(first_neg / yc.rows(), k);
    }

    #[test]
    fn dimension_checked() {
        let m = scalar_model(0.5, 1.0, 1.0, 0.0);
        let set = scalar_set(&m, &unit_box(), 2, 0.01);
        assert!(matches!(
            set.row_margins(&DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn text_round_trip() {
        let m = scalar_model(0.5, 1.0, 1.0, 0.0);
        let yc = unit_box();
        let set = scalar_set(&m, &yc, 3, 0.01).augment_disturbance(&yc.a_y).unwrap();
        let back = AdmissibleSet::from_text(&set.to_text()).unwrap();
        assert_eq!(back, set);
        assert!(AdmissibleSet::from_text("model x\nvariant nope\n").is_err());
    }
}
