//! Lagged-diffusivity solver for
//! `−δΔu − div(∇u/√(ε+|∇u|²)) + λu = f` with homogeneous Neumann data,
//! and the continuation `(ε, δ) → 0`.
//!
//! The discrete problem is the Euler–Lagrange system of
//! [`energy_regularized_lambda`](crate::reference::energy_regularized_lambda):
//! each cell owns the forward faces it differences, and freezing the
//! coefficient `a = δ + (ε + |∇u_k|²)^{-1/2}` on them gives a quadratic
//! majorant of the energy. Every outer step therefore decreases the energy,
//! even when the inner solve is inexact, because preconditioned CG started at
//! `u_k` decreases the majorant monotonically.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{gradient, Grid, ScalarField, Side, VectorField};
use crate::reference::energy_regularized_lambda;

/// How the zero-order term and the data enter the equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Parameterization {
    /// `… + λu = f`.
    Lambda(f64),
    /// ROF weight `μ` with data `g`: `λ = 1/μ`, right side `g/μ`.
    Mu(f64),
}

impl Parameterization {
    pub fn lambda(&self) -> f64 {
        match *self {
            Parameterization::Lambda(l) => l,
            Parameterization::Mu(m) => 1.0 / m,
        }
    }

    /// Right-hand side of the λ-form equation for the given data.
    pub fn rhs(&self, data: &ScalarField) -> ScalarField {
        match *self {
            Parameterization::Lambda(_) => data.clone(),
            Parameterization::Mu(m) => data.scale(1.0 / m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub eps: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub eps: f64,
    /// Defaults to `eps`.
    pub delta: Option<f64>,
    pub param: Parameterization,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub schedule: Vec<Stage>,
}

impl SolverConfig {
    pub fn new(eps: f64, param: Parameterization) -> Self {
        SolverConfig {
            eps,
            delta: None,
            param,
            outer_tol: 1e-6,
            inner_tol: 1e-10,
            max_outer: 500,
            max_inner: 20_000,
            schedule: Vec::new(),
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn with_tolerances(mut self, outer: f64, inner: f64) -> Self {
        self.outer_tol = outer;
        self.inner_tol = inner;
        self
    }

    /// Continuation stages with `δ = ε` at each one.
    pub fn with_eps_schedule(mut self, eps: &[f64]) -> Self {
        self.schedule = eps.iter().map(|&e| Stage { eps: e, delta: e }).collect();
        self
    }

    pub fn with_schedule(mut self, schedule: Vec<Stage>) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(self.eps)
    }

    pub fn lambda(&self) -> f64 {
        self.param.lambda()
    }

    /// Copy of the config at one continuation stage.
    pub fn at_stage(&self, stage: Stage) -> SolverConfig {
        SolverConfig {
            eps: stage.eps,
            delta: Some(stage.delta),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.delta() >= 0.0 && self.delta().is_finite()) {
            return bad(format!("delta must be nonnegative, got {}", self.delta()));
        }
        match self.param {
            Parameterization::Lambda(l) if !(l > 0.0 && l.is_finite()) => {
                return bad(format!("lambda must be positive, got {l}"))
            }
            Parameterization::Mu(m) if !(m > 0.0 && m.is_finite()) => {
                return bad(format!("mu must be positive, got {m}"))
            }
            _ => {}
        }
        if !(self.outer_tol > 0.0 && self.inner_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration caps must be positive".into());
        }
        for (i, s) in self.schedule.iter().enumerate() {
            if !(s.eps > 0.0 && s.delta >= 0.0 && s.eps.is_finite() && s.delta.is_finite()) {
                return bad(format!("invalid schedule stage {i}: {s:?}"));
            }
            if i > 0 && s.eps >= self.schedule[i - 1].eps {
                return bad("schedule must be strictly decreasing in eps".into());
            }
        }
        Ok(())
    }
}

/// `A v = −div(a ∇v) + λ v` with `a` frozen on the forward faces.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub coeff: VectorField,
    pub lambda: f64,
    pub rhs: ScalarField,
    /// (cell, +neighbor, a/h²) for every interior face.
    faces: Vec<(usize, usize, f64)>,
    diag: Vec<f64>,
}

impl LinearSystem {
    pub fn from_coefficients(coeff: VectorField, lambda: f64, rhs: ScalarField) -> Result<Self> {
        if **coeff.grid() != **rhs.grid() {
            return Err(Error::GridMismatch);
        }
        let grid = coeff.grid().clone();
        let mut faces = Vec::with_capacity(grid.len() * grid.dim());
        let mut diag = vec![lambda; grid.len()];
        for k in 0..grid.len() {
            for axis in 0..grid.dim() {
                if let Some(n) = grid.neighbor(k, axis, Side::Plus) {
                    let h = grid.spacing(axis);
                    let c = coeff.component(axis)[k] / (h * h);
                    faces.push((k, n, c));
                    diag[k] += c;
                    diag[n] += c;
                }
            }
        }
        Ok(LinearSystem {
            coeff,
            lambda,
            rhs,
            faces,
            diag,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.rhs.grid()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(v) {
            *o = self.lambda * x;
        }
        for &(k, n, c) in &self.faces {
            let flux = c * (v[k] - v[n]);
            out[k] += flux;
            out[n] -= flux;
        }
    }

    pub fn apply(&self, v: &ScalarField) -> ScalarField {
        let mut out = vec![0.0; v.len()];
        self.apply_into(v.values(), &mut out);
        ScalarField::from_raw(v.grid().clone(), out)
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn min_coefficient(&self) -> f64 {
        self.coeff
            .components()
            .iter()
            .flatten()
            .copied()
            .filter(|&c| c > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Per-cell coefficient `δ + (ε + |∇u|²)^{-1/2}` on the forward faces of `u`.
pub fn face_coefficients(u: &ScalarField, eps: f64, delta: f64) -> VectorField {
    let s = gradient(u).magnitude_sq();
    let grid = u.grid().clone();
    VectorField::from_faces(grid, |k, _| delta + 1.0 / (eps + s[k]).sqrt())
}

/// Linearization of the equation at `u_k` for the data `f`, interpreted
/// through `cfg.param`.
pub fn assemble_system(u_k: &ScalarField, f: &ScalarField, cfg: &SolverConfig) -> Result<LinearSystem> {
    u_k.ensure_same_grid(f)?;
    if !(cfg.eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {}", cfg.eps)));
    }
    let coeff = face_coefficients(u_k, cfg.eps, cfg.delta());
    LinearSystem::from_coefficients(coeff, cfg.lambda(), cfg.param.rhs(f))
}

#[derive(Debug, Clone)]
pub struct LinearSolve {
    pub x: ScalarField,
    pub iterations: usize,
    /// Final `‖b − Ax‖₂ / ‖b‖₂`.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Symmetric positive-definite operator applied matrix-free.
trait SpdOperator {
    fn apply_into(&self, v: &[f64], out: &mut [f64]);
    fn diagonal(&self) -> &[f64];
}

impl SpdOperator for LinearSystem {
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        LinearSystem::apply_into(self, v, out)
    }
    fn diagonal(&self) -> &[f64] {
        &self.diag
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned CG; returns (iterations, relative residual).
fn pcg(op: &impl SpdOperator, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> (usize, f64) {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return (0, 0.0);
    }
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = vec![0.0; n];
    op.apply_into(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while res > tol && it < max_iter {
        op.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        it += 1;
    }
    (it, res)
}

/// Jacobi-preconditioned conjugate gradients from `x0` (zero when `None`).
pub fn linear_solve(
    sys: &LinearSystem,
    rhs: &ScalarField,
    tol: f64,
    max_iter: usize,
    x0: Option<&ScalarField>,
) -> Result<LinearSolve> {
    if rhs.len() != sys.rhs.len() {
        return Err(Error::GridMismatch);
    }
    let mut x = match x0 {
        Some(x0) => x0.values().to_vec(),
        None => vec![0.0; rhs.len()],
    };
    let (iterations, res) = pcg(sys, rhs.values(), &mut x, tol, max_iter);
    Ok(LinearSolve {
        x: ScalarField::from_raw(rhs.grid().clone(), x),
        iterations,
        relative_residual: res,
        converged: res <= tol,
    })
}

/// Newton operator `λI + Σ_k D_kᵀ M_k D_k`, where `D_k` maps `u` to the
/// forward differences `g` owned by cell k, `r = √(ε + |g|²)` and
/// `M_k = δI + (I − (w gᵀ + g wᵀ)/(2r))/r` for an auxiliary flux `w` with
/// `|w| ≤ 1`. At `w = g/r` this is the exact Hessian of the energy (divided by
/// the cell measure); carrying `w` separately is the primal-dual Newton
/// linearization, which stays well conditioned as `ε → 0`.
struct Hessian {
    lambda: f64,
    inv_h: [f64; 2],
    /// Owning cell, its +x and +y neighbors (`usize::MAX` when missing) and
    /// the upper triangle of `M_k`.
    cells: Vec<(usize, [usize; 2], [f64; 3])>,
    diag: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl Hessian {
    fn new(u: &ScalarField, w: &[[f64; 2]], eps: f64, delta: f64, lambda: f64) -> Self {
        let grid = u.grid();
        let dim = grid.dim();
        let inv_h = [1.0 / grid.spacing(0), if dim > 1 { 1.0 / grid.spacing(1) } else { 0.0 }];
        let v = u.values();
        let mut diag = vec![lambda; grid.len()];
        let mut cells = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let mut nb = [NONE; 2];
            let mut g = [0.0; 2];
            for a in 0..dim {
                if let Some(n) = grid.neighbor(k, a, Side::Plus) {
                    nb[a] = n;
                    g[a] = (v[n] - v[k]) * inv_h[a];
                }
            }
            if nb == [NONE; 2] {
                continue;
            }
            let r2 = eps + g[0] * g[0] + g[1] * g[1];
            let r = r2.sqrt();
            let iso = delta + 1.0 / r;
            let wk = w[k];
            let m = [
                iso - wk[0] * g[0] / r2,
                -0.5 * (wk[0] * g[1] + g[0] * wk[1]) / r2,
                iso - wk[1] * g[1] / r2,
            ];
            // coefficient rows of D_k: ∂g/∂u_k = -inv_h, ∂g/∂u_nb = +inv_h
            let cx = if nb[0] != NONE { inv_h[0] } else { 0.0 };
            let cy = if nb[1] != NONE { inv_h[1] } else { 0.0 };
            diag[k] += m[0] * cx * cx + 2.0 * m[1] * cx * cy + m[2] * cy * cy;
            if nb[0] != NONE {
                diag[nb[0]] += m[0] * cx * cx;
            }
            if nb[1] != NONE {
                diag[nb[1]] += m[2] * cy * cy;
            }
            cells.push((k, nb, m));
        }
        Hessian {
            lambda,
            inv_h,
            cells,
            diag,
        }
    }
}

/// Forward differences owned by each cell (zero on missing faces).
fn cell_gradients(u: &ScalarField) -> Vec<[f64; 2]> {
    let d = gradient(u);
    let c = d.components();
    (0..u.len())
        .map(|k| [c[0][k], if c.len() > 1 { c[1][k] } else { 0.0 }])
        .collect()
}

/// Shifts `u` by the constant that restores `λ·mean(u) = mean(f)`. Flux
/// terms sum to zero under the Neumann condition, so this is the exact
/// energy minimizer along the constant direction and never raises the
/// energy.
fn fix_mean(u: ScalarField, target: f64) -> ScalarField {
    let shift = target - u.mean();
    u.map(|v| v + shift)
}

/// Flux update of the primal-dual Newton step for `Δu = α·d`:
/// `Δw = (I − w gᵀ/r) Δg / r + g/r − w`, taken with the largest step in (0, 1]
/// that keeps `|w| < 1`.
fn advance_flux(u: &ScalarField, w: &[[f64; 2]], d: &[f64], alpha: f64, eps: f64) -> Vec<[f64; 2]> {
    let g = cell_gradients(u);
    let du = ScalarField::from_raw(u.grid().clone(), d.iter().map(|v| alpha * v).collect());
    let dg = cell_gradients(&du);
    let dw: Vec<[f64; 2]> = (0..g.len())
        .map(|k| {
            let (g, w, dg) = (g[k], w[k], dg[k]);
            let r = (eps + g[0] * g[0] + g[1] * g[1]).sqrt();
            let gdg = (g[0] * dg[0] + g[1] * dg[1]) / r;
            [
                (dg[0] - w[0] * gdg) / r + g[0] / r - w[0],
                (dg[1] - w[1] * gdg) / r + g[1] / r - w[1],
            ]
        })
        .collect();
    let mut s: f64 = 1.0;
    for (w, dw) in w.iter().zip(&dw) {
        // largest t with |w + t dw| ≤ 1
        let a = dw[0] * dw[0] + dw[1] * dw[1];
        if a == 0.0 {
            continue;
        }
        let b = w[0] * dw[0] + w[1] * dw[1];
        let c = w[0] * w[0] + w[1] * w[1] - 1.0;
        let t = (-b + (b * b - a * c).max(0.0).sqrt()) / a;
        if t < 1.0 {
            s = s.min(0.99 * t);
        }
    }
    w.iter()
        .zip(&dw)
        .map(|(w, dw)| [w[0] + s * dw[0], w[1] + s * dw[1]])
        .collect()
}

fn normalized_flux(g: &[[f64; 2]], eps: f64) -> Vec<[f64; 2]> {
    g.iter()
        .map(|g| {
            let r = (eps + g[0] * g[0] + g[1] * g[1]).sqrt();
            [g[0] / r, g[1] / r]
        })
        .collect()
}

impl SpdOperator for Hessian {
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(v) {
            *o = self.lambda * x;
        }
        for &(k, nb, m) in &self.cells {
            let dx = if nb[0] != NONE { (v[nb[0]] - v[k]) * self.inv_h[0] } else { 0.0 };
            let dy = if nb[1] != NONE { (v[nb[1]] - v[k]) * self.inv_h[1] } else { 0.0 };
            let wx = m[0] * dx + m[1] * dy;
            let wy = m[1] * dx + m[2] * dy;
            if nb[0] != NONE {
                let t = wx * self.inv_h[0];
                out[nb[0]] += t;
                out[k] -= t;
            }
            if nb[1] != NONE {
                let t = wy * self.inv_h[1];
                out[nb[1]] += t;
                out[k] -= t;
            }
        }
    }
    fn diagonal(&self) -> &[f64] {
        &self.diag
    }
}

/// `−δΔu − div(∇u/√(ε+|∇u|²)) + λu − f` cell by cell.
pub fn nonlinear_residual(u: &ScalarField, f: &ScalarField, cfg: &SolverConfig) -> Result<ScalarField> {
    let sys = assemble_system(u, f, cfg)?;
    Ok(sys.apply(u).sub(&sys.rhs))
}

/// Scale against which the residual ∞-norm is compared.
fn residual_scale(rhs: &ScalarField, lambda: f64) -> f64 {
    let m = rhs.max_abs();
    if m == 0.0 {
        1.0
    } else {
        m + lambda * m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterStep {
    pub energy: f64,
    /// `‖nonlinear_residual‖∞` after the step.
    pub residual: f64,
    pub inner_iterations: usize,
    /// Whether the step was a Newton step (otherwise lagged diffusivity).
    pub newton: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxOuterIterations,
    InnerCapExceeded,
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    /// Entry 0 describes the starting point.
    pub steps: Vec<OuterStep>,
    pub status: SolveStatus,
    /// Threshold the residual was compared against.
    pub threshold: f64,
}

impl SolveTrace {
    pub fn outer_iterations(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn final_residual(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.residual)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: ScalarField,
    pub trace: SolveTrace,
    pub converged: bool,
}

/// Solves the regularized equation starting from `f/λ`.
pub fn solve_regularized(f: &ScalarField, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let rhs = cfg.param.rhs(f);
    let u0 = rhs.scale(1.0 / cfg.lambda());
    solve_from(f, cfg, u0)
}

fn solve_from(f: &ScalarField, cfg: &SolverConfig, mut u: ScalarField) -> Result<Solution> {
    u.ensure_same_grid(f)?;
    let lambda = cfg.lambda();
    let (eps, delta) = (cfg.eps, cfg.delta());
    let rhs = cfg.param.rhs(f);
    let threshold = cfg.outer_tol * residual_scale(&rhs, lambda);
    let energy = |u: &ScalarField| energy_regularized_lambda(u, &rhs, eps, delta, lambda);
    let target_mean = rhs.mean() / lambda;

    let mut sys = assemble_system(&u, f, cfg)?;
    let mut res_field = sys.apply(&u).sub(&rhs);
    let mut e = energy(&u)?;
    let mut steps = vec![OuterStep {
        energy: e,
        residual: res_field.max_abs(),
        inner_iterations: 0,
        newton: false,
    }];
    let mut w = normalized_flux(&cell_gradients(&u), eps);
    let mut status = SolveStatus::MaxOuterIterations;
    if res_field.max_abs() <= threshold {
        status = SolveStatus::Converged;
    }
    while status != SolveStatus::Converged && steps.len() <= cfg.max_outer {
        let mut inner = 0;
        let mut accepted = None;

        // Primal-dual Newton step, kept only if it passes an Armijo test on
        // the energy.
        let hess = Hessian::new(&u, &w, eps, delta, lambda);
        let neg_grad: Vec<f64> = res_field.values().iter().map(|r| -r).collect();
        let forcing = (res_field.max_abs() / residual_scale(&rhs, lambda)).clamp(cfg.inner_tol, 0.1);
        let mut d = vec![0.0; u.len()];
        let (it, _) = pcg(&hess, &neg_grad, &mut d, forcing, cfg.max_inner);
        inner += it;
        let slope = -dot(&neg_grad, &d) * u.grid().cell_measure();
        let mut step = None;
        if slope < 0.0 {
            let slack = 1e-13 * e.abs().max(1.0);
            let mut alpha = 1.0;
            for _ in 0..12 {
                let trial = fix_mean(
                    u.zip_map(
                        &ScalarField::from_raw(u.grid().clone(), d.clone()),
                        |a, b| a + alpha * b,
                    ),
                    target_mean,
                );
                let et = energy(&trial)?;
                if et <= e + 1e-4 * alpha * slope || (et <= e + slack && alpha == 1.0) {
                    let st = assemble_system(&trial, f, cfg)?;
                    let rt = st.apply(&trial).sub(&rhs);
                    if et <= e + 1e-4 * alpha * slope || rt.max_abs() < res_field.max_abs() {
                        accepted = Some((trial, st, rt, et, true));
                        step = Some(alpha);
                        break;
                    }
                }
                alpha *= 0.5;
            }
        }
        if let Some(alpha) = step {
            w = advance_flux(&u, &w, &d, alpha, eps);
        }

        // Otherwise a lagged-diffusivity step, which always descends.
        let (next, next_sys, next_res, next_e, newton) = match accepted {
            Some(a) => a,
            None => {
                let mut lin = linear_solve(&sys, &rhs, cfg.inner_tol, cfg.max_inner, Some(&u))?;
                inner += lin.iterations;
                if !lin.converged {
                    status = SolveStatus::InnerCapExceeded;
                }
                lin.x = fix_mean(lin.x, target_mean);
                let st = assemble_system(&lin.x, f, cfg)?;
                let rt = st.apply(&lin.x).sub(&rhs);
                let et = energy(&lin.x)?;
                w = normalized_flux(&cell_gradients(&lin.x), eps);
                (lin.x, st, rt, et, false)
            }
        };
        u = next;
        sys = next_sys;
        res_field = next_res;
        e = next_e;
        steps.push(OuterStep {
            energy: e,
            residual: res_field.max_abs(),
            inner_iterations: inner,
            newton,
        });
        if res_field.max_abs() <= threshold {
            status = SolveStatus::Converged;
        } else if status == SolveStatus::InnerCapExceeded {
            break;
        }
    }
    let converged = status == SolveStatus::Converged;
    Ok(Solution {
        u,
        trace: SolveTrace {
            steps,
            status,
            threshold,
        },
        converged,
    })
}

#[derive(Debug, Clone)]
pub struct StageRecord {
    pub stage: Stage,
    pub trace: SolveTrace,
    pub converged: bool,
    /// `‖u − oracle‖₂` and the same divided by `‖oracle‖₂`.
    pub oracle_distance: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub u: ScalarField,
    pub stages: Vec<StageRecord>,
    pub converged: bool,
}

/// Runs `cfg.schedule`, warm-starting each stage from the previous one.
/// Without a schedule the single stage `(cfg.eps, cfg.delta())` is used.
pub fn continuation_solve(
    f: &ScalarField,
    cfg: &SolverConfig,
    oracle: Option<&ScalarField>,
) -> Result<ContinuationResult> {
    cfg.validate()?;
    if let Some(o) = oracle {
        o.ensure_same_grid(f)?;
    }
    let schedule = if cfg.schedule.is_empty() {
        vec![Stage {
            eps: cfg.eps,
            delta: cfg.delta(),
        }]
    } else {
        cfg.schedule.clone()
    };
    let mut u = cfg.param.rhs(f).scale(1.0 / cfg.lambda());
    let mut stages = Vec::with_capacity(schedule.len());
    for stage in schedule {
        let sol = solve_from(f, &cfg.at_stage(stage), u)?;
        u = sol.u;
        let oracle_distance = oracle.map(|o| {
            let d = u.sub(o);
            let dist = d.dot(&d).sqrt();
            let on = o.dot(o).sqrt();
            (dist, if on > 0.0 { dist / on } else { dist })
        });
        stages.push(StageRecord {
            stage,
            trace: sol.trace,
            converged: sol.converged,
            oracle_distance,
        });
    }
    let converged = stages.iter().all(|s| s.converged);
    Ok(ContinuationResult { u, stages, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_grid, DomainSpec};

    #[test]
    fn coefficient_closed_forms() {
        let g = build_grid(&DomainSpec::rectangle(6, 5, 1.0, 1.0)).unwrap();
        let z = ScalarField::zeros(g.clone());
        let sys = assemble_system(&z, &z, &SolverConfig::new(1.0, Parameterization::Lambda(1.0)).with_delta(0.0)).unwrap();
        for k in 0..g.len() {
            for a in 0..2 {
                if g.neighbor(k, a, Side::Plus).is_some() {
                    assert_eq!(sys.coeff.component(a)[k], 1.0);
                }
            }
        }
        let cfg = SolverConfig::new(0.25, Parameterization::Lambda(1.0)).with_delta(0.1);
        let sys = assemble_system(&z, &z, &cfg).unwrap();
        assert!((sys.min_coefficient() - 2.1).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let ok = SolverConfig::new(0.1, Parameterization::Mu(2.0));
        assert!(ok.validate().is_ok());
        assert_eq!(ok.delta(), 0.1);
        assert_eq!(ok.lambda(), 0.5);
        assert!(SolverConfig::new(0.0, Parameterization::Lambda(1.0)).validate().is_err());
        assert!(SolverConfig::new(0.1, Parameterization::Lambda(0.0)).validate().is_err());
        assert!(ok.clone().with_delta(-1.0).validate().is_err());
        assert!(ok.clone().with_eps_schedule(&[1e-1, 1e-1]).validate().is_err());
        assert!(ok.clone().with_eps_schedule(&[1e-1, 1e-2]).validate().is_ok());
    }

    #[test]
    fn constant_data() {
        let g = build_grid(&DomainSpec::rectangle(8, 8, 1.0, 1.0)).unwrap();
        let f = ScalarField::constant(g, 2.0);
        let s = solve_regularized(&f, &SolverConfig::new(0.1, Parameterization::Lambda(1.0))).unwrap();
        assert!(s.converged);
        assert!(s.u.values().iter().all(|&v| (v - 2.0).abs() < 1e-14));
        let s = solve_regularized(&f, &SolverConfig::new(0.1, Parameterization::Lambda(2.0))).unwrap();
        assert!(s.u.values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }
}
