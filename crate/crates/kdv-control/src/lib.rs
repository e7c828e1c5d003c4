//! Numerical control of the Korteweg-de Vries equation on a bounded interval.
//!
//! The crate discretizes `u_t + (xi u)_x + u_xxx = f` with boundary
//! conditions `u(0) = u(L) = u_x(L) = 0`, synthesizes controls by the Hilbert
//! Uniqueness Method, and evaluates Carleman/observability inequalities and
//! weighted Hardy-type estimates numerically.

pub mod band;
pub mod carleman;
pub mod config;
pub mod error;
pub mod hum;
pub mod kdv_solve;
pub mod mesh;
pub mod nonlinear_ctrl;
pub mod regional;
pub mod rng;
pub mod scenario;
pub mod suite;
pub mod weights;

pub use error::{KdvError, Result};
pub use kdv_solve::{Forcing, Potential, Trajectory};
pub use mesh::{build_operator, BcTag, DiscreteOperator, Mesh};
pub use weights::WeightKind;
