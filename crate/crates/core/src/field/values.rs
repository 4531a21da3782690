use std::sync::Arc;

use super::grid::{Grid, Side};
use crate::error::{Error, Result};

fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// One real value per interior cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    /// Wraps `values`, checking the length and that every entry is finite.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        ScalarField::from_raw(grid, vec![c; n])
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `func` at cell centers.
    pub fn from_fn(grid: Arc<Grid>, func: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| func(grid.center(k))).collect();
        ScalarField::from_raw(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        same_grid(&self.grid, &other.grid)
    }

    pub fn ensure_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_raw(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination; panics if the grids differ in size.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(self.len(), other.len(), "zip_map over different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        ScalarField::from_raw(self.grid.clone(), values)
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        self.map(|v| v * s)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a + b)
    }

    /// Cell-measure weighted inner product.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        s * self.grid.cell_measure()
    }

    /// Cell-measure weighted integral.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_measure()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index of the first cell attaining the maximum.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        best
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

/// Forward-staggered face values: component `a` at cell `k` lives on the face
/// between `k` and its `+a` neighbor. Faces without a `+a` neighbor carry 0.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Arc<Grid>,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    /// Wraps per-axis face values. Values on faces that cross the boundary
    /// are reset to zero.
    pub fn new(grid: Arc<Grid>, mut comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "expected {} components, got {}",
                grid.dim(),
                comps.len()
            )));
        }
        for (axis, c) in comps.iter_mut().enumerate() {
            if c.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    got: c.len(),
                });
            }
            for (k, v) in c.iter_mut().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(k));
                }
                if grid.neighbor(k, axis, Side::Plus).is_none() {
                    *v = 0.0;
                }
            }
        }
        Ok(VectorField { grid, comps })
    }

    pub(crate) fn from_raw(grid: Arc<Grid>, comps: Vec<Vec<f64>>) -> Self {
        VectorField { grid, comps }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let comps = vec![vec![0.0; grid.len()]; grid.dim()];
        VectorField { grid, comps }
    }

    /// Builds face values from `func(cell, axis)`; boundary faces get 0.
    pub fn from_faces(grid: Arc<Grid>, func: impl Fn(usize, usize) -> f64) -> Self {
        let comps = (0..grid.dim())
            .map(|a| {
                (0..grid.len())
                    .map(|k| {
                        if grid.neighbor(k, a, Side::Plus).is_some() {
                            func(k, a)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        VectorField { grid, comps }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    /// Squared Euclidean length of the face vector owned by each cell.
    pub fn magnitude_sq(&self) -> ScalarField {
        let values = (0..self.grid.len())
            .map(|k| self.comps.iter().map(|c| c[k] * c[k]).sum())
            .collect();
        ScalarField::from_raw(self.grid.clone(), values)
    }

    pub fn magnitude(&self) -> ScalarField {
        self.magnitude_sq().map(f64::sqrt)
    }

    /// Cell-measure weighted inner product over all faces.
    pub fn dot(&self, other: &VectorField) -> f64 {
        let s: f64 = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum();
        s * self.grid.cell_measure()
    }

    /// Multiplies each face by the coefficient of its owning cell.
    pub fn scale_by_cell(&self, coeff: &ScalarField) -> VectorField {
        let comps = self
            .comps
            .iter()
            .map(|c| c.iter().zip(coeff.values()).map(|(v, a)| v * a).collect())
            .collect();
        VectorField::from_raw(self.grid.clone(), comps)
    }
}
