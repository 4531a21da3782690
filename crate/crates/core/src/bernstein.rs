//! Squared-gradient quantities for the gradient estimates: `w = |∇u|²`, the
//! operator `ℒ`, the identity satisfied by `w`, the subsolution and
//! localized inequalities, and the boundary-weighted field `z = w·e^{γd}`.
//!
//! Derivatives here are centered differences with mirror ghosts (a missing
//! neighbor takes the value of the reflected cell), so first derivatives are
//! averages of the two adjacent forward faces. Identities are evaluated only
//! on cells at least [`INTERIOR_BAND`] cells away from the boundary, where
//! the compound stencils never see a ghost.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{boundary_normal_derivative, distance_field, Grid, ScalarField};

pub const INTERIOR_BAND: usize = 2;

/// Default constant in the subsolution inequality.
pub const DEFAULT_C: f64 = 3.0;

/// Centered first and second differences of a field, cell by cell. In 1D
/// the y entries are zero.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub dxx: Vec<f64>,
    pub dyy: Vec<f64>,
    pub dxy: Vec<f64>,
}

impl Derivatives {
    pub fn gradient_sq(&self, k: usize) -> f64 {
        self.dx[k] * self.dx[k] + self.dy[k] * self.dy[k]
    }

    pub fn laplacian(&self, k: usize) -> f64 {
        self.dxx[k] + self.dyy[k]
    }

    /// `D²v a·b`.
    pub fn hessian_form(&self, k: usize, a: [f64; 2], b: [f64; 2]) -> f64 {
        self.dxx[k] * a[0] * b[0] + self.dxy[k] * (a[0] * b[1] + a[1] * b[0]) + self.dyy[k] * a[1] * b[1]
    }

    pub fn grad(&self, k: usize) -> [f64; 2] {
        [self.dx[k], self.dy[k]]
    }
}

/// Index of the (di, dj) neighbor of each cell, with mirror fallbacks.
fn neighborhood(grid: &Grid) -> Vec<[usize; 9]> {
    (0..grid.len())
        .map(|k| {
            let [i, j] = grid.cell(k);
            let (i, j) = (i as isize, j as isize);
            let mut out = [k; 9];
            for dj in -1..=1isize {
                for di in -1..=1isize {
                    let slot = ((dj + 1) * 3 + (di + 1)) as usize;
                    out[slot] = grid
                        .index(i + di, j + dj)
                        .or_else(|| grid.index(i, j + dj))
                        .or_else(|| grid.index(i + di, j))
                        .unwrap_or(k);
                }
            }
            out
        })
        .collect()
}

pub fn centered_derivatives(v: &ScalarField) -> Derivatives {
    let grid = v.grid();
    let nb = neighborhood(grid);
    let [hx, hy] = grid.h();
    let two_d = grid.dim() == 2;
    let x = v.values();
    let n = v.len();
    let mut d = Derivatives {
        dx: vec![0.0; n],
        dy: vec![0.0; n],
        dxx: vec![0.0; n],
        dyy: vec![0.0; n],
        dxy: vec![0.0; n],
    };
    // slots: 0 SW, 1 S, 2 SE, 3 W, 4 C, 5 E, 6 NW, 7 N, 8 NE
    for k in 0..n {
        let s = &nb[k];
        d.dx[k] = (x[s[5]] - x[s[3]]) / (2.0 * hx);
        d.dxx[k] = (x[s[5]] - 2.0 * x[k] + x[s[3]]) / (hx * hx);
        if two_d {
            d.dy[k] = (x[s[7]] - x[s[1]]) / (2.0 * hy);
            d.dyy[k] = (x[s[7]] - 2.0 * x[k] + x[s[1]]) / (hy * hy);
            d.dxy[k] = (x[s[8]] - x[s[2]] - x[s[6]] + x[s[0]]) / (4.0 * hx * hy);
        }
    }
    d
}

/// Band for [`divform_residual`], whose flux is differenced once more.
pub const DIVFORM_BAND: usize = 3;

/// Cells whose `band`-neighborhood lies inside the domain.
pub fn interior_cells(grid: &Grid, band: usize) -> Vec<usize> {
    (0..grid.len()).filter(|&k| grid.is_deep_interior(k, band)).collect()
}

/// Largest `|v|` over the cells at least `band` cells from the boundary.
pub fn interior_max_abs(v: &ScalarField, band: usize) -> f64 {
    interior_cells(v.grid(), band)
        .into_iter()
        .fold(0.0, |m, k| m.max(v[k].abs()))
}

/// `|∇u|²` at cell centers.
pub fn squared_gradient(u: &ScalarField) -> ScalarField {
    let d = centered_derivatives(u);
    let w = (0..u.len()).map(|k| d.gradient_sq(k)).collect();
    ScalarField::from_raw(u.grid().clone(), w)
}

/// `|D²u|² = Σ u_ij²`.
pub fn hessian_norm_sq(u: &ScalarField) -> ScalarField {
    let d = centered_derivatives(u);
    let h = (0..u.len())
        .map(|k| d.dxx[k] * d.dxx[k] + 2.0 * d.dxy[k] * d.dxy[k] + d.dyy[k] * d.dyy[k])
        .collect();
    ScalarField::from_raw(u.grid().clone(), h)
}

/// `ℒw = −δΔw − Δw/√(ε+|∇u|²) + D²w ∇u·∇u/(ε+|∇u|²)^{3/2}`.
pub fn elliptic_operator_l(w: &ScalarField, u: &ScalarField, eps: f64, delta: f64) -> Result<ScalarField> {
    w.ensure_same_grid(u)?;
    check_eps(eps)?;
    let dw = centered_derivatives(w);
    let du = centered_derivatives(u);
    Ok(apply_l(&dw, &du, w.grid(), eps, delta))
}

fn apply_l(dw: &Derivatives, du: &Derivatives, grid: &Arc<Grid>, eps: f64, delta: f64) -> ScalarField {
    let vals = (0..grid.len())
        .map(|k| {
            let s2 = eps + du.gradient_sq(k);
            let s = s2.sqrt();
            let g = du.grad(k);
            -delta * dw.laplacian(k) - dw.laplacian(k) / s + dw.hessian_form(k, g, g) / (s2 * s)
        })
        .collect();
    ScalarField::from_raw(grid.clone(), vals)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")))
    }
}

/// Everything the estimates need from one solution.
#[derive(Debug, Clone)]
pub struct BernsteinFields {
    pub w: ScalarField,
    pub z: ScalarField,
    pub gamma: f64,
    pub lw: ScalarField,
    pub hessian_norm_sq: ScalarField,
}

impl BernsteinFields {
    pub fn compute(u: &ScalarField, eps: f64, delta: f64, gamma: f64) -> Result<Self> {
        let w = squared_gradient(u);
        let z = weighted_field(&w, &distance_field(u.grid()), gamma)?;
        let lw = elliptic_operator_l(&w, u, eps, delta)?;
        Ok(BernsteinFields {
            z,
            lw,
            hessian_norm_sq: hessian_norm_sq(u),
            gamma,
            w,
        })
    }
}

/// Pointwise LHS − RHS of the identity satisfied by `w = |∇u|²` when `u`
/// solves the regularized equation:
///
/// `ℒw + 2λw + 2δ|D²u|² + 2|D²u|²/√(ε+w)`
/// `  = −Δu (∇w·∇u)/(ε+w)^{3/2} + (3/2)(∇u·∇w)²/(ε+w)^{5/2}`
/// `    − (1/2)|∇w|²/(ε+w)^{3/2} + 2∇f·∇u`.
pub fn eqw_residual(u: &ScalarField, f: &ScalarField, eps: f64, delta: f64, lambda: f64) -> Result<ScalarField> {
    u.ensure_same_grid(f)?;
    check_eps(eps)?;
    let grid = u.grid();
    let du = centered_derivatives(u);
    let w = ScalarField::from_raw(grid.clone(), (0..u.len()).map(|k| du.gradient_sq(k)).collect());
    let dw = centered_derivatives(&w);
    let df = centered_derivatives(f);
    let lw = apply_l(&dw, &du, grid, eps, delta);
    let vals = (0..u.len())
        .map(|k| {
            let hess = du.dxx[k] * du.dxx[k] + 2.0 * du.dxy[k] * du.dxy[k] + du.dyy[k] * du.dyy[k];
            let s2 = eps + w[k];
            let s = s2.sqrt();
            let s3 = s2 * s;
            let s5 = s3 * s2;
            let gwu = dw.dx[k] * du.dx[k] + dw.dy[k] * du.dy[k];
            let lhs = lw[k] + 2.0 * lambda * w[k] + 2.0 * delta * hess + 2.0 * hess / s;
            let rhs = -du.laplacian(k) * gwu / s3 + 1.5 * gwu * gwu / s5 - 0.5 * dw.gradient_sq(k) / s3
                + 2.0 * (df.dx[k] * du.dx[k] + df.dy[k] * du.dy[k]);
            lhs - rhs
        })
        .collect();
    Ok(ScalarField::from_raw(grid.clone(), vals))
}

/// Pointwise LHS − RHS of the conservative form of the same identity:
///
/// `−div(δ∇w + ∇w/√(ε+w) − (∇w·∇u)∇u/(ε+w)^{3/2}) + 2λw + 2δ|D²u|²`
/// `  + 2|D²u|²/√(ε+w) = (1/2)|∇w|²/(ε+w)^{3/2} + 2∇f·∇u`.
///
/// The flux is formed at cell centers and differentiated with the same
/// centered stencil, so the band of excluded cells is one wider.
pub fn divform_residual(u: &ScalarField, f: &ScalarField, eps: f64, delta: f64, lambda: f64) -> Result<ScalarField> {
    u.ensure_same_grid(f)?;
    check_eps(eps)?;
    let grid = u.grid();
    let du = centered_derivatives(u);
    let w = ScalarField::from_raw(grid.clone(), (0..u.len()).map(|k| du.gradient_sq(k)).collect());
    let dw = centered_derivatives(&w);
    let df = centered_derivatives(f);
    let mut fx = vec![0.0; u.len()];
    let mut fy = vec![0.0; u.len()];
    for k in 0..u.len() {
        let s2 = eps + w[k];
        let s = s2.sqrt();
        let gwu = dw.dx[k] * du.dx[k] + dw.dy[k] * du.dy[k];
        fx[k] = (delta + 1.0 / s) * dw.dx[k] - gwu * du.dx[k] / (s2 * s);
        fy[k] = (delta + 1.0 / s) * dw.dy[k] - gwu * du.dy[k] / (s2 * s);
    }
    let dfx = centered_derivatives(&ScalarField::from_raw(grid.clone(), fx));
    let dfy = centered_derivatives(&ScalarField::from_raw(grid.clone(), fy));
    let vals = (0..u.len())
        .map(|k| {
            let hess = du.dxx[k] * du.dxx[k] + 2.0 * du.dxy[k] * du.dxy[k] + du.dyy[k] * du.dyy[k];
            let s2 = eps + w[k];
            let s = s2.sqrt();
            let lhs = -(dfx.dx[k] + dfy.dy[k]) + 2.0 * lambda * w[k] + 2.0 * delta * hess + 2.0 * hess / s;
            let rhs = 0.5 * dw.gradient_sq(k) / (s2 * s) + 2.0 * (df.dx[k] * du.dx[k] + df.dy[k] * du.dy[k]);
            lhs - rhs
        })
        .collect();
    Ok(ScalarField::from_raw(grid.clone(), vals))
}

/// Pointwise values of an inequality `LHS ≤ RHS` on the interior cells it
/// was evaluated on, stored as `LHS − RHS`.
#[derive(Debug, Clone)]
pub struct MarginReport {
    pub excess: ScalarField,
    pub cells: Vec<usize>,
    /// Largest positive part of the excess (0 when nothing is violated).
    pub max_violation: f64,
    pub argmax: Option<usize>,
    pub violating_cells: usize,
}

impl MarginReport {
    fn from_excess(excess: ScalarField, cells: Vec<usize>) -> Self {
        let mut max_violation = 0.0;
        let mut argmax = None;
        let mut violating_cells = 0;
        for &k in &cells {
            let v = excess[k];
            if v > 0.0 {
                violating_cells += 1;
                if v > max_violation {
                    max_violation = v;
                    argmax = Some(k);
                }
            }
        }
        MarginReport {
            excess,
            cells,
            max_violation,
            argmax,
            violating_cells,
        }
    }

    /// Fraction of evaluated cells whose excess is above `threshold`.
    pub fn fraction_above(&self, threshold: f64) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        let n = self.cells.iter().filter(|&&k| self.excess[k] > threshold).count();
        n as f64 / self.cells.len() as f64
    }

    pub fn location(&self) -> Option<[f64; 2]> {
        self.argmax.map(|k| self.excess.grid().center(k))
    }
}

/// Excess of `ℒw + 2λw ≤ C|∇w|²/(ε+w)^{3/2} + 2|∇f|√w` on interior cells.
pub fn subsolution_margin(
    u: &ScalarField,
    f: &ScalarField,
    eps: f64,
    delta: f64,
    lambda: f64,
    c: f64,
) -> Result<MarginReport> {
    u.ensure_same_grid(f)?;
    check_eps(eps)?;
    let grid = u.grid();
    let du = centered_derivatives(u);
    let w = ScalarField::from_raw(grid.clone(), (0..u.len()).map(|k| du.gradient_sq(k)).collect());
    let dw = centered_derivatives(&w);
    let df = centered_derivatives(f);
    let lw = apply_l(&dw, &du, grid, eps, delta);
    let vals = (0..u.len())
        .map(|k| {
            let s2 = eps + w[k];
            lw[k] + 2.0 * lambda * w[k]
                - c * dw.gradient_sq(k) / (s2 * s2.sqrt())
                - 2.0 * df.gradient_sq(k).sqrt() * w[k].sqrt()
        })
        .collect();
    Ok(MarginReport::from_excess(
        ScalarField::from_raw(grid.clone(), vals),
        interior_cells(grid, INTERIOR_BAND),
    ))
}

/// `φ(x) = (1 − |x − x₀|²/r²)₊^q` with outer radius `r = (1+ρ)R`. An
/// infinite `R` gives `φ ≡ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffProfile {
    pub center: [f64; 2],
    pub inner_radius: f64,
    pub rho: f64,
    pub q: u32,
}

impl CutoffProfile {
    pub fn new(center: [f64; 2], inner_radius: f64, rho: f64) -> Result<Self> {
        if !(inner_radius > 0.0) || !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cutoff needs R > 0 and rho >= 0 (got {inner_radius}, {rho})"
            )));
        }
        Ok(CutoffProfile {
            center,
            inner_radius,
            rho,
            q: 4,
        })
    }

    /// `φ ≡ 1`.
    pub fn unit() -> Self {
        CutoffProfile {
            center: [0.0, 0.0],
            inner_radius: f64::INFINITY,
            rho: 0.0,
            q: 4,
        }
    }

    pub fn outer_radius(&self) -> f64 {
        (1.0 + self.rho) * self.inner_radius
    }

    /// Returns `(φ, ∇φ, D²φ)` at `x`.
    pub fn eval(&self, x: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let r = self.outer_radius();
        if r.is_infinite() {
            return (1.0, [0.0; 2], [[0.0; 2]; 2]);
        }
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        let r2 = r * r;
        let base = 1.0 - (d[0] * d[0] + d[1] * d[1]) / r2;
        if base <= 0.0 {
            return (0.0, [0.0; 2], [[0.0; 2]; 2]);
        }
        let q = self.q as f64;
        let phi = base.powi(self.q as i32);
        let p1 = q * base.powi(self.q as i32 - 1);
        let p2 = q * (q - 1.0) * base.powi(self.q as i32 - 2);
        let grad = [-2.0 * p1 * d[0] / r2, -2.0 * p1 * d[1] / r2];
        let mut hess = [[0.0; 2]; 2];
        for (a, row) in hess.iter_mut().enumerate() {
            for (b, h) in row.iter_mut().enumerate() {
                *h = 4.0 * p2 * d[a] * d[b] / (r2 * r2) - if a == b { 2.0 * p1 / r2 } else { 0.0 };
            }
        }
        (phi, grad, hess)
    }

    /// A constant C with `|∇φ|² ≤ Cφ^{3/2}` and `|D²φ| ≤ Cφ^{1/2}` in
    /// dimension `dim`, valid for `q ≥ 4`.
    pub fn constant(&self, dim: usize) -> f64 {
        let r = self.outer_radius();
        if r.is_infinite() {
            return 0.0;
        }
        let q = self.q as f64;
        let c_grad = 4.0 * q * q / (r * r);
        let c_hess = (2.0 * q * (dim as f64).sqrt() + 4.0 * q * (q - 1.0)) / (r * r);
        c_grad.max(c_hess)
    }
}

/// Excess of the localized inequality for `wφ` on `{φ > 0}`:
///
/// `ℒ(wφ) + 2λwφ ≤ C|∇(wφ)|²/(φ(ε+w)^{3/2}) − 2δ∇(wφ)·∇φ/φ`
/// `  + δw[2|∇φ|²/φ − Δφ] + 2|∇f|√w φ + C√w[|∇φ|²/φ + |D²φ|]`.
///
/// The cutoff's support must lie inside the domain unless `φ ≡ 1`.
pub fn localized_inequality_check(
    u: &ScalarField,
    f: &ScalarField,
    eps: f64,
    delta: f64,
    lambda: f64,
    cutoff: &CutoffProfile,
    c: f64,
) -> Result<MarginReport> {
    u.ensure_same_grid(f)?;
    check_eps(eps)?;
    let grid = u.grid();
    let r = cutoff.outer_radius();
    if r.is_finite() && !grid.ball_inside(cutoff.center, r) {
        return Err(Error::OutsideDomain);
    }
    let du = centered_derivatives(u);
    let w: Vec<f64> = (0..u.len()).map(|k| du.gradient_sq(k)).collect();
    let phis: Vec<_> = (0..u.len()).map(|k| cutoff.eval(grid.center(k))).collect();
    let wphi = ScalarField::from_raw(grid.clone(), (0..u.len()).map(|k| w[k] * phis[k].0).collect());
    let dwp = centered_derivatives(&wphi);
    let df = centered_derivatives(f);
    let l_wphi = apply_l(&dwp, &du, grid, eps, delta);

    let mut vals = vec![0.0; u.len()];
    let mut cells = Vec::new();
    for k in interior_cells(grid, INTERIOR_BAND) {
        let (phi, gphi, hphi) = phis[k];
        if phi <= 0.0 {
            continue;
        }
        cells.push(k);
        let s2 = eps + w[k];
        let s3 = s2 * s2.sqrt();
        let sw = w[k].sqrt();
        let gp2 = gphi[0] * gphi[0] + gphi[1] * gphi[1];
        let lap_phi = hphi[0][0] + hphi[1][1];
        let hess_phi = (hphi[0][0].powi(2) + 2.0 * hphi[0][1].powi(2) + hphi[1][1].powi(2)).sqrt();
        let gwp = dwp.grad(k);
        let lhs = l_wphi[k] + 2.0 * lambda * w[k] * phi;
        let rhs = c * dwp.gradient_sq(k) / (phi * s3) - 2.0 * delta * (gwp[0] * gphi[0] + gwp[1] * gphi[1]) / phi
            + delta * w[k] * (2.0 * gp2 / phi - lap_phi)
            + 2.0 * df.gradient_sq(k).sqrt() * sw * phi
            + c * sw * (gp2 / phi + hess_phi);
        vals[k] = lhs - rhs;
    }
    Ok(MarginReport::from_excess(ScalarField::from_raw(grid.clone(), vals), cells))
}

/// `z = w·e^{γd}`.
pub fn weighted_field(w: &ScalarField, d: &ScalarField, gamma: f64) -> Result<ScalarField> {
    w.ensure_same_grid(d)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be nonnegative, got {gamma}")));
    }
    if gamma == 0.0 {
        return Ok(w.clone());
    }
    Ok(w.zip_map(d, |w, d| w * (gamma * d).exp()))
}

/// Twice the largest positive eigenvalue of the second-difference matrix of
/// the distance field over cells within `3h` of the boundary; 0 on convex
/// grids.
pub fn gamma_bound(grid: &Arc<Grid>) -> f64 {
    if grid.is_convex() {
        return 0.0;
    }
    let d = distance_field(grid);
    let h = grid.min_spacing();
    let dd = centered_derivatives(&d);
    let mut top: f64 = 0.0;
    for k in 0..grid.len() {
        // full 3×3 stencil only, so no ghost enters the second differences
        if d[k] > 3.0 * h || !grid.is_deep_interior(k, 1) {
            continue;
        }
        let (a, b, c) = (dd.dxx[k], dd.dxy[k], dd.dyy[k]);
        let lam = 0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt();
        top = top.max(lam);
    }
    2.0 * top
}

#[derive(Debug, Clone)]
pub struct BoundarySignReport {
    /// `∂z/∂ν` per boundary face, in `Grid::boundary_cells` order.
    pub normal_derivatives: Vec<f64>,
    /// Maximum over the faces that were not excluded.
    pub max: f64,
    pub argmax: Option<usize>,
    /// Boundary cells next to a reentrant corner, left out of `max`.
    pub excluded_cells: Vec<usize>,
    pub gamma: f64,
}

/// Largest outward normal derivative of `z = |∇u|²e^{γd}` on the boundary.
pub fn boundary_sign_check(u: &ScalarField, gamma: f64) -> Result<BoundarySignReport> {
    let grid = u.grid();
    let z = weighted_field(&squared_gradient(u), &distance_field(grid), gamma)?;
    let dz = boundary_normal_derivative(&z);
    let excluded_cells = grid.reentrant_corner_cells();
    let mut max = f64::NEG_INFINITY;
    let mut argmax = None;
    for (f, b) in grid.boundary_cells().iter().enumerate() {
        if excluded_cells.contains(&b.cell) {
            continue;
        }
        if dz[f] > max {
            max = dz[f];
            argmax = Some(f);
        }
    }
    Ok(BoundarySignReport {
        normal_derivatives: dz,
        max,
        argmax,
        excluded_cells,
        gamma,
    })
}

/// Closed-form smooth fields with derivatives of every order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ManufacturedField {
    Constant(f64),
    /// `a·x + b`.
    Affine { a: [f64; 2], b: f64 },
    /// `amp·cos(kx π x)·cos(ky π y)`.
    CosProduct { amp: f64, kx: f64, ky: f64 },
    /// `amp·(p(x) + p(y))` with `p(t) = 3t² − 2t³`, flat at t = 0 and t = 1.
    NeumannCubic { amp: f64 },
}

impl ManufacturedField {
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
        Ok(match name.replace('-', "_").as_str() {
            "constant" => ManufacturedField::Constant(get("value", 1.0)),
            "affine" => ManufacturedField::Affine {
                a: [get("ax", 1.0), get("ay", 0.0)],
                b: get("b", 0.0),
            },
            "cos_product" => ManufacturedField::CosProduct {
                amp: get("amp", 1.0),
                kx: get("kx", 1.0),
                ky: get("ky", 1.0),
            },
            "neumann_cubic" => ManufacturedField::NeumannCubic { amp: get("amp", 1.0) },
            _ => {
                return Err(Error::Unknown {
                    kind: "manufactured field",
                    name: name.to_string(),
                })
            }
        })
    }

    /// `∂^{nx+ny} v / ∂x^{nx} ∂y^{ny}` at `x`.
    pub fn partial(&self, x: [f64; 2], nx: u32, ny: u32) -> f64 {
        match *self {
            ManufacturedField::Constant(c) => {
                if nx + ny == 0 {
                    c
                } else {
                    0.0
                }
            }
            ManufacturedField::Affine { a, b } => match (nx, ny) {
                (0, 0) => a[0] * x[0] + a[1] * x[1] + b,
                (1, 0) => a[0],
                (0, 1) => a[1],
                _ => 0.0,
            },
            ManufacturedField::CosProduct { amp, kx, ky } => {
                let dcos = |c: f64, t: f64, n: u32| c.powi(n as i32) * (c * t + n as f64 * PI / 2.0).cos();
                amp * dcos(kx * PI, x[0], nx) * dcos(ky * PI, x[1], ny)
            }
            ManufacturedField::NeumannCubic { amp } => {
                let p = |t: f64, n: u32| match n {
                    0 => 3.0 * t * t - 2.0 * t * t * t,
                    1 => 6.0 * t - 6.0 * t * t,
                    2 => 6.0 - 12.0 * t,
                    3 => -12.0,
                    _ => 0.0,
                };
                match (nx, ny) {
                    (_, 0) => amp * (p(x[0], nx) + if nx == 0 { p(x[1], 0) } else { 0.0 }),
                    (0, _) => amp * p(x[1], ny),
                    _ => 0.0,
                }
            }
        }
    }

    /// Gradient and Hessian restricted to the first `dim` axes.
    fn jet(&self, x: [f64; 2], dim: usize) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let mut g = [0.0; 2];
        let mut h = [[0.0; 2]; 2];
        for a in 0..dim {
            let ea = if a == 0 { (1, 0) } else { (0, 1) };
            g[a] = self.partial(x, ea.0, ea.1);
            for b in 0..dim {
                let eb = if b == 0 { (1, 0) } else { (0, 1) };
                h[a][b] = self.partial(x, ea.0 + eb.0, ea.1 + eb.1);
            }
        }
        (self.partial(x, 0, 0), g, h)
    }

    /// Source that makes this field an exact solution of the regularized
    /// equation: `λu − (δ + 1/s)Δu + D²u ∇u·∇u/s³` with `s = √(ε+|∇u|²)`.
    pub fn source_at(&self, x: [f64; 2], dim: usize, eps: f64, delta: f64, lambda: f64) -> f64 {
        let (u, g, h) = self.jet(x, dim);
        let s2 = eps + g[0] * g[0] + g[1] * g[1];
        let s = s2.sqrt();
        let lap = h[0][0] + h[1][1];
        let form = h[0][0] * g[0] * g[0] + 2.0 * h[0][1] * g[0] * g[1] + h[1][1] * g[1] * g[1];
        lambda * u - (delta + 1.0 / s) * lap + form / (s2 * s)
    }

    /// Analytic `ℒw` for `w = |∇u|²` of this field, with the same ε, δ.
    pub fn l_of_w_at(&self, x: [f64; 2], dim: usize, eps: f64, delta: f64) -> f64 {
        let (_, g, _) = self.jet(x, dim);
        // D²w = 2(D²u D²u + Σ_c u_c D²u_c)
        let mut d2w = [[0.0; 2]; 2];
        let axes = |a: usize| if a == 0 { (1u32, 0u32) } else { (0, 1) };
        for a in 0..dim {
            for b in 0..dim {
                let mut acc = 0.0;
                for c in 0..dim {
                    let (ea, eb, ec) = (axes(a), axes(b), axes(c));
                    let uac = self.partial(x, ea.0 + ec.0, ea.1 + ec.1);
                    let ubc = self.partial(x, eb.0 + ec.0, eb.1 + ec.1);
                    let uabc = self.partial(x, ea.0 + eb.0 + ec.0, ea.1 + eb.1 + ec.1);
                    acc += uac * ubc + g[c] * uabc;
                }
                d2w[a][b] = 2.0 * acc;
            }
        }
        let s2 = eps + g[0] * g[0] + g[1] * g[1];
        let s = s2.sqrt();
        let lap_w = d2w[0][0] + d2w[1][1];
        let form = d2w[0][0] * g[0] * g[0] + 2.0 * d2w[0][1] * g[0] * g[1] + d2w[1][1] * g[1] * g[1];
        -delta * lap_w - lap_w / s + form / (s2 * s)
    }
}

/// Samples `u*` and the matching source `f*` at the cell centers.
pub fn manufactured_source(
    field: &ManufacturedField,
    eps: f64,
    delta: f64,
    lambda: f64,
    grid: &Arc<Grid>,
) -> Result<(ScalarField, ScalarField)> {
    check_eps(eps)?;
    let dim = grid.dim();
    let u = ScalarField::from_fn(grid.clone(), |x| field.partial(x, 0, 0));
    let f = ScalarField::from_fn(grid.clone(), |x| field.source_at(x, dim, eps, delta, lambda));
    Ok((u, f))
}
