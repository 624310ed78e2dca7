//! Dense strictly convex quadratic programming.
//!
//! Solves `min ½ xᵀHx + fᵀx  s.t.  A x <= b` with a dual active-set method
//! (Goldfarb–Idnani). The method starts from the unconstrained minimiser and
//! adds violated rows one at a time, so an infeasible problem is detected when
//! no dual step can restore the violated row.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 500;

/// Relative size below which a primal step direction counts as zero.
const DEPENDENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers, one per inequality row (zero for inactive rows).
    pub lambda: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

/// Residuals of the KKT conditions for `A x <= b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

pub fn kkt_residuals(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> KktResiduals {
    let grad = h * x + f + a.transpose() * lambda;
    let slack = b - a * x;
    KktResiduals {
        stationarity: grad.amax(),
        primal: slack.iter().map(|s| (-s).max(0.0)).fold(0.0, f64::max),
        dual: lambda.iter().map(|l| (-l).max(0.0)).fold(0.0, f64::max),
        complementarity: slack
            .iter()
            .zip(lambda.iter())
            .map(|(s, l)| (s * l).abs())
            .fold(0.0, f64::max),
    }
}

pub fn objective(h: &DMatrix<f64>, f: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(h * x)) + f.dot(x)
}

pub fn solve_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<QpSolution> {
    solve_qp_with(h, f, a, b, DEFAULT_MAX_ITER)
}

pub fn solve_qp_with(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    max_iter: usize,
) -> Result<QpSolution> {
    let n = h.nrows();
    let m = a.nrows();
    if h.ncols() != n || f.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: f.len(),
        });
    }
    if a.ncols() != n || b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let chol = h
        .clone()
        .cholesky()
        .ok_or(Error::Singular("QP Hessian is not positive definite"))?;
    let h_inv = chol.inverse();

    let mut x = -(&h_inv * f);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let row_scale: Vec<f64> = (0..m)
        .map(|i| a.row(i).amax().max(b[i].abs()).max(1.0))
        .collect();
    let tol = 1e-12;

    let mut iterations = 0;
    loop {
        // Most violated row, measured relative to its scale.
        let slack = b - a * &x;
        let mut worst = None;
        let mut worst_val = -tol;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let v = slack[i] / row_scale[i];
            if v < worst_val {
                worst_val = v;
                worst = Some(i);
            }
        }
        let Some(p) = worst else {
            break;
        };

        let np: DVector<f64> = -a.row(p).transpose();
        let hn_scale = (&h_inv * &np).amax().max(f64::MIN_POSITIVE);
        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::QpIterationLimit(max_iter));
            }
            let (z, r) = step_directions(&h_inv, a, &active, &np)?;
            // Partial (dual) step: largest t keeping active multipliers >= 0.
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (j, rj) in r.iter().enumerate() {
                if *rj > 0.0 {
                    let t = u[j] / rj;
                    if t < t1 {
                        t1 = t;
                        drop = Some(j);
                    }
                }
            }
            // Full (primal) step: makes row p active.
            let zn = z.dot(&np);
            let s_p = b[p] - a.row(p).transpose().dot(&x);
            // A normal already spanned by the active set leaves no primal
            // direction, so only a dual step is possible.
            let t2 = if z.amax() <= DEPENDENCE_TOL * hn_scale || zn <= 0.0 {
                f64::INFINITY
            } else {
                -s_p / zn
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(Error::QpInfeasible);
            }
            for (uj, rj) in u.iter_mut().zip(r.iter()) {
                *uj -= t * rj;
            }
            u_p += t;
            if t2.is_finite() {
                x += &z * t;
            }
            if t2 <= t1 {
                active.push(p);
                u.push(u_p);
                break;
            }
            let k = drop.expect("finite partial step has a blocking row");
            active.remove(k);
            u.remove(k);
        }
    }

    let mut lambda = DVector::zeros(m);
    for (i, ui) in active.iter().zip(u.iter()) {
        lambda[*i] = ui.max(0.0);
    }
    Ok(QpSolution {
        x,
        lambda,
        active,
        iterations,
    })
}

/// Primal direction `z` and dual direction `r` for adding normal `np` to the
/// active set whose normals are `-A_i`.
fn step_directions(
    h_inv: &DMatrix<f64>,
    a: &DMatrix<f64>,
    active: &[usize],
    np: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let hn = h_inv * np;
    if active.is_empty() {
        return Ok((hn, DVector::zeros(0)));
    }
    let n = h_inv.nrows();
    let q = active.len();
    let mut nmat = DMatrix::zeros(n, q);
    for (j, &i) in active.iter().enumerate() {
        nmat.set_column(j, &(-a.row(i).transpose()));
    }
    let hn_mat = h_inv * &nmat;
    let gram = nmat.transpose() * &hn_mat;
    let r = gram
        .lu()
        .solve(&(nmat.transpose() * &hn))
        .ok_or(Error::Singular("active constraint normals"))?;
    let z = hn - hn_mat * &r;
    Ok((z, r))
}
