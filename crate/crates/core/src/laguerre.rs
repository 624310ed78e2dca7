//! Virtual command dynamics for the extended command governor.
//!
//! The governed command is `v = C̄ x̄ + rho` with `x̄+ = Ā x̄`. With a
//! Laguerre basis `Ā` is upper triangular with `alpha` on the diagonal, and
//! `alpha = 0` reduces it to a shift register.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaguerreBasis {
    pub alpha: f64,
    /// Length of the virtual state.
    pub depth: usize,
}

impl LaguerreBasis {
    pub fn new(alpha: f64, depth: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must lie in [0, 1], got {alpha}"),
            });
        }
        if depth == 0 {
            return Err(Error::InvalidParameter {
                name: "depth",
                reason: "virtual state must have at least one entry".into(),
            });
        }
        Ok(Self { alpha, depth })
    }

    /// `alpha = 1 - dt / tau`, clamped into `[0, 1)`.
    pub fn from_time_constant(dt: f64, tau: f64, depth: usize) -> Result<Self> {
        if !(tau > 0.0 && dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "time constant and step must be positive (tau = {tau}, dt = {dt})"
            )));
        }
        Self::new((1.0 - dt / tau).clamp(0.0, 1.0 - 1e-9), depth)
    }

    pub fn mu(&self) -> f64 {
        1.0 - self.alpha
    }

    pub fn a_bar(&self) -> DMatrix<f64> {
        let (a, mu) = (self.alpha, self.mu());
        DMatrix::from_fn(self.depth, self.depth, |i, j| {
            if i == j {
                a
            } else if j > i {
                (-a).powi((j - i - 1) as i32) * mu
            } else {
                0.0
            }
        })
    }

    pub fn c_bar(&self) -> DMatrix<f64> {
        DMatrix::from_fn(1, self.depth, |_, j| (-self.alpha).powi(j as i32))
    }

    pub fn is_schur(&self) -> bool {
        self.alpha < 1.0
    }
}

/// Quadratic weights of the command-governor objective.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgWeights {
    pub k_l: f64,
    /// Weight on the virtual state, solving `Āᵀ P Ā - P + Q = 0`.
    pub p: DMatrix<f64>,
    /// `k_L I` on the virtual state.
    pub q: DMatrix<f64>,
}

impl EcgWeights {
    pub fn new(basis: &LaguerreBasis, k_l: f64) -> Result<Self> {
        if !(k_l > 0.0) {
            return Err(Error::InvalidParameter {
                name: "k_L",
                reason: format!("must be positive, got {k_l}"),
            });
        }
        if !basis.is_schur() {
            return Err(Error::NotSchur(basis.alpha));
        }
        let q = DMatrix::identity(basis.depth, basis.depth) * k_l;
        let p = linalg::solve_discrete_lyapunov(&basis.a_bar(), &q)?;
        Ok(Self { k_l, p, q })
    }

    /// `‖ĀᵀPĀ − P + Q‖∞`.
    pub fn residual(&self, basis: &LaguerreBasis) -> f64 {
        linalg::norm_inf(&linalg::lyapunov_residual(&basis.a_bar(), &self.p, &self.q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn zero_alpha_is_shift_register() {
        let b = LaguerreBasis::new(0.0, 4).unwrap();
        let a = b.a_bar();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a[(i, j)], if j == i + 1 { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(b.c_bar().iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn structure_for_nonzero_alpha() {
        let b = LaguerreBasis::new(0.6, 4).unwrap();
        let a = b.a_bar();
        let mu = 0.4;
        assert_eq!(a[(0, 0)], 0.6);
        assert_eq!(a[(0, 1)], mu);
        assert!((a[(0, 2)] + 0.6 * mu).abs() < 1e-15);
        assert!((a[(0, 3)] - 0.36 * mu).abs() < 1e-15);
        assert_eq!(a[(3, 0)], 0.0);
        let c = b.c_bar();
        assert!((c[(0, 3)] + 0.216).abs() < 1e-15);
        assert!(linalg::is_schur(&a));
    }

    #[test]
    fn lyapunov_residual_and_decay() {
        for alpha in [0.0, 0.5, 0.95, 0.99] {
            let b = LaguerreBasis::new(alpha, 4).unwrap();
            let w = EcgWeights::new(&b, 1.0).unwrap();
            assert!(w.residual(&b) <= 1e-9 * linalg::norm_inf(&w.q), "alpha {alpha}");
            assert!(w.p.clone().cholesky().is_some());
            let a = b.a_bar();
            let mut x = DVector::from_column_slice(&[1.0, -0.5, 0.3, 2.0]);
            let mut prev = (x.transpose() * &w.p * &x)[(0, 0)];
            for _ in 0..50 {
                x = &a * x;
                let cur = (x.transpose() * &w.p * &x)[(0, 0)];
                assert!(cur <= prev + 1e-12);
                prev = cur;
            }
        }
    }

    #[test]
    fn invalid_settings_rejected() {
        assert!(LaguerreBasis::new(1.2, 4).is_err());
        assert!(LaguerreBasis::new(0.5, 0).is_err());
        let marginal = LaguerreBasis::new(1.0, 4).unwrap();
        assert!(EcgWeights::new(&marginal, 1.0).is_err());
        let b = LaguerreBasis::new(0.5, 4).unwrap();
        assert!(EcgWeights::new(&b, 0.0).is_err());
    }

    #[test]
    fn alpha_from_time_constant() {
        let b = LaguerreBasis::from_time_constant(0.01, 0.5, 4).unwrap();
        assert!((b.alpha - 0.98).abs() < 1e-15);
        let fast = LaguerreBasis::from_time_constant(0.01, 0.001, 4).unwrap();
        assert_eq!(fast.alpha, 0.0);
    }
}
