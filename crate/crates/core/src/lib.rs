//! One-dimensional energy balance model with a delayed memory term on
//! `x = sin(latitude)` in `(-1, 1)`:
//!
//! `u_t - (rho0 (1 - x^2) u_x)_x = r(t) q(x) beta(u) - R_e(u) + f(H(t, x, u))`
//!
//! with the memory term `H(t, x, u) = int_{-tau}^0 k(s, x) u(t + s, x) ds`.
//!
//! The crate provides a finite-volume IMEX solver for the Sellers-type
//! model, a regularization solver for the set-valued Budyko model, and
//! reconstruction experiments for the insolation function `q`.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budyko;
pub mod commands;
pub mod error;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod memory;
pub mod physics;
pub mod presets;
pub mod stepper;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{DiffusionOperator, Grid};
pub use memory::{HistoryBuffer, KernelShape, MemoryKernel};
pub use physics::{
    CoalbedoKind, CoalbedoSpec, CoalbedoValue, EmissionSpec, Emissivity, InsolationSpec, MemoryResponseSpec,
    ModelParams, QProfile, Seasonal,
};
pub use stepper::{simulate, SimulationOptions, TimeScheme, Trajectory};
