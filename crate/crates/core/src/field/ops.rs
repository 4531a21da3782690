//! Discrete differential operators with homogeneous Neumann handling.
//!
//! `gradient` uses forward differences on the staggered faces and zeroes
//! faces that cross the boundary; `divergence` is its exact negative adjoint
//! for the cell-measure inner products, so `laplacian = divergence ∘ gradient`
//! is symmetric negative semidefinite with the constants as its kernel.

use super::grid::Side;
use super::values::{ScalarField, VectorField};
use crate::error::{Error, Result};

pub fn gradient(u: &ScalarField) -> VectorField {
    let grid = u.grid();
    let vals = u.values();
    let comps = (0..grid.dim())
        .map(|axis| {
            let inv_h = 1.0 / grid.spacing(axis);
            (0..grid.len())
                .map(|k| match grid.neighbor(k, axis, Side::Plus) {
                    Some(n) => (vals[n] - vals[k]) * inv_h,
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    VectorField::from_raw(grid.clone(), comps)
}

/// Negative adjoint of [`gradient`]. Values on faces without a `+axis`
/// neighbor are ignored.
pub fn divergence(p: &VectorField) -> ScalarField {
    let grid = p.grid();
    let mut out = vec![0.0; grid.len()];
    for axis in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing(axis);
        let c = p.component(axis);
        for (k, o) in out.iter_mut().enumerate() {
            if grid.neighbor(k, axis, Side::Plus).is_some() {
                *o += c[k] * inv_h;
            }
            if let Some(m) = grid.neighbor(k, axis, Side::Minus) {
                *o -= c[m] * inv_h;
            }
        }
    }
    ScalarField::from_raw(grid.clone(), out)
}

pub fn laplacian(u: &ScalarField) -> ScalarField {
    divergence(&gradient(u))
}

/// One-sided difference along the outward normal at every boundary face
/// listed by [`Grid::boundary_cells`](super::Grid::boundary_cells). Positive
/// values mean `u` increases toward the boundary.
pub fn boundary_normal_derivative(u: &ScalarField) -> Vec<f64> {
    let grid = u.grid();
    let vals = u.values();
    grid.boundary_cells()
        .iter()
        .map(|b| match grid.neighbor(b.cell, b.axis, b.outward.opposite()) {
            Some(inner) => (vals[b.cell] - vals[inner]) / grid.spacing(b.axis),
            None => 0.0,
        })
        .collect()
}

/// Discrete Lᵖ norm with cell-measure weights; `p = f64::INFINITY` gives the
/// maximum of `|u|`.
pub fn field_norm(u: &ScalarField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParameter(format!("norm exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(u.max_abs());
    }
    let m = u.grid().cell_measure();
    if p == 1.0 {
        return Ok(u.values().iter().map(|v| v.abs()).sum::<f64>() * m);
    }
    if p == 2.0 {
        return Ok((u.values().iter().map(|v| v * v).sum::<f64>() * m).sqrt());
    }
    // Scale by the max to keep v^p in range for large p.
    let top = u.max_abs();
    if top == 0.0 {
        return Ok(0.0);
    }
    let s: f64 = u.values().iter().map(|v| (v.abs() / top).powf(p)).sum();
    Ok(top * (s * m).powf(1.0 / p))
}

/// Lᵖ norm of the pointwise magnitude of a face field. For `p = 1` applied
/// to `gradient(u)` this is the discrete total variation of `u`.
pub fn vector_norm(p_field: &VectorField, p: f64) -> Result<f64> {
    field_norm(&p_field.magnitude(), p)
}

/// Discrete total variation `‖∇u‖₁`.
pub fn total_variation(u: &ScalarField) -> f64 {
    gradient(u).magnitude().values().iter().sum::<f64>() * u.grid().cell_measure()
}
