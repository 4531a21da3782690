//! Grids, cell-centered fields and Neumann finite-difference operators.

mod distance;
mod grid;
mod ops;
mod values;

pub use distance::distance_field;
pub use grid::{build_grid, BoundaryCell, DomainSpec, Grid, GridKind, Side};
pub use ops::{
    boundary_normal_derivative, divergence, field_norm, gradient, laplacian, total_variation,
    vector_norm,
};
pub use values::{ScalarField, VectorField};
