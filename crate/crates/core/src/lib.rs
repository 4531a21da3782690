//! Total-variation (ROF) minimizers and numerical checks of their gradient
//! estimates.
//!
//! The crate is organised bottom-up:
//!
//! * [`field`]: grids, fields and Neumann finite-difference operators.
//! * [`reference`]: exact 1D taut-string and dual-projection reference
//!   minimizers of `μ·TV(u) + ½‖u − f‖²`.
//! * [`pde`]: Newton / lagged-diffusivity solver for the ε,δ-regularized Neumann
//!   problem and the continuation ε,δ → 0.
//! * [`bernstein`]: the squared-gradient quantities, their identities and
//!   manufactured solutions.
//! * [`regularity`]: inequality reports for the Lipschitz, Sobolev, BV and
//!   maximum-principle estimates.
//! * [`source`]: deterministic synthetic data.

pub mod bernstein;
pub mod error;
pub mod field;
pub mod pde;
pub mod reference;
pub mod regularity;
pub mod source;

pub use error::{Error, Result};
pub use bernstein::{BernsteinFields, CutoffProfile, ManufacturedField};
pub use field::{build_grid, DomainSpec, Grid, GridKind, ScalarField, VectorField};
pub use pde::{continuation_solve, solve_regularized, Parameterization, SolveTrace, SolverConfig, Stage};
pub use reference::{dual_projection, taut_string_1d};
pub use regularity::{fit_constants, fit_r_sweep, EstimateReport, LocalWindow, Outcome, TheoremTag};
pub use source::{generate_source, Source, SourceKind};
