#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod governor;
pub mod harness;
pub mod laguerre;
pub mod linalg;
pub mod linear;
pub mod maneuver;
pub mod metrics;
pub mod oinf;
pub mod params;
pub mod qp;
pub mod tire;
pub mod vehicle;

pub use error::{Error, Result};
