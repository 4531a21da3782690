//! Shared fixtures for the criterion benchmarks.

use std::sync::Arc;

use tvreg_core::{build_grid, generate_source, DomainSpec, Grid, ScalarField, SourceKind};

/// Smoothed noise with a fixed seed, so every run times the same input.
pub fn noise(grid: &Arc<Grid>, amp: f64) -> ScalarField {
    generate_source(&SourceKind::SmoothedNoise { sigma: 0.05, amp }, grid, 3).unwrap().field
}

pub fn square(n: usize) -> Arc<Grid> {
    build_grid(&DomainSpec::rectangle(n, n, 1.0, 1.0)).unwrap()
}

pub fn interval(n: usize) -> Arc<Grid> {
    build_grid(&DomainSpec::interval(n, 1.0)).unwrap()
}
