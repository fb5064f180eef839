//! Numerical laboratory for the one-dimensional quasilinear Smoluchowski–Poisson
//! system `u_t = (a(u) u_x − u v_x)_x`, `v_xx + u − M = 0` on `(0,1)` with no-flux
//! boundaries, and for its mass-Lagrangian reformulation
//! `f_t = Ψ(f)_yy − 1 + M f` on `(0,M)`.

pub mod coefficient;
pub mod diagnostics;
pub mod error;
pub mod expr;
pub mod harness;
pub mod quad;
pub mod regime;
pub mod solver;
pub mod transform;

pub use error::{Error, Result};
