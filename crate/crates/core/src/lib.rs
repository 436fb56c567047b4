//! Finite-horizon time-crisis optimal control.
//!
//! The crate solves the time-crisis problem through its crossing-structure
//! reformulation (crossing times become decision variables and the control
//! is re-parameterized on a normalized time axis), then rebuilds the
//! normalized Pontryagin certificate of the solution and checks first- and
//! second-order necessary conditions numerically.
//!
//! Module map:
//! - [`problem`]: problem data, derivative validation, catalog, LIG check.
//! - [`simulate`]: RK4 integration, crossing detection, crisis cost.
//! - [`reformulate`]: change of time and the augmented single-crossing system.
//! - [`solve`]: discrete-adjoint gradients and the augmented-Lagrangian solver.
//! - [`multipliers`]: costate with jumps, jump coefficients, control multipliers.
//! - [`verify`]: residual suite, linearization, critical cone and quadratic form.
//! - [`pipeline`]: file-producing commands used by the CLI.

pub mod config;
pub mod error;
pub mod io;
pub mod multipliers;
pub mod ode;
pub mod pipeline;
pub mod poly;
pub mod problem;
pub mod reformulate;
pub mod signal;
pub mod simulate;
pub mod solve;
pub mod verify;

pub use error::{Error, Result};
pub use poly::{PolyMap, Polynomial, SmoothMap};
pub use problem::{catalog, BoxHull, ProblemSpec};
pub use signal::{ControlSignal, TimeDomain};
