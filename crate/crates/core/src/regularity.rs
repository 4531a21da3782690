//! Inequality reports for the gradient estimates of TV minimizers.
//!
//! Each check returns an [`EstimateReport`] with both sides of an
//! inequality. Reports pass when `lhs ≤ rhs·(1 + slack)`; any absolute
//! tolerance is already part of `rhs`. Checks whose constants are unknown
//! (nonconvex domains, the local estimate) are [`Outcome::Deferred`] and
//! are decided over a corpus by [`fit_constants`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{field_norm, gradient, total_variation, Grid, ScalarField};
use crate::pde::{continuation_solve, Parameterization, SolverConfig, StageRecord};

/// Relative slack for gradient-norm inequalities.
pub const GRADIENT_SLACK: f64 = 0.05;
/// Relative slack for 1D total variation.
pub const TV_SLACK: f64 = 1e-3;
/// Absolute tolerance of the maximum principle.
pub const MAX_PRINCIPLE_TOL: f64 = 1e-8;
/// Bound on max/min of fitted constants across a corpus.
pub const STABILITY_RATIO: f64 = 10.0;
/// Smallest corpus `fit_constants` accepts.
pub const MIN_CORPUS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TheoremTag {
    /// `‖∇u‖_∞ ≤ (c₁/λ)(‖∇f‖_∞ + c₀)`.
    GlobalLipschitz,
    /// `‖∇u‖_p ≤ (1/λ)‖∇f‖_p` on convex domains, `p ≥ 2`.
    Sobolev,
    /// `K(R)` of the local Lipschitz bound.
    LocalLipschitz,
    /// `TV(u) ≤ TV(f)` in 1D.
    Bv,
    /// `‖u‖₁ + TV(u) ≤ ‖f‖₁ + TV(f)` in 1D.
    BvNorm,
    /// `TV(u) ≤ ‖f‖₂²/(2μ)`.
    BvEnergy,
    /// `‖u‖_∞ ≤ (1/λ)‖f‖_∞`.
    MaxPrinciple,
    /// Largest `∂z/∂ν` on the boundary against `10h`.
    BoundarySign,
    /// Observed convergence order of the squared-gradient identity.
    EqwOrder,
}

impl TheoremTag {
    pub const ALL: [TheoremTag; 9] = [
        TheoremTag::GlobalLipschitz,
        TheoremTag::Sobolev,
        TheoremTag::LocalLipschitz,
        TheoremTag::Bv,
        TheoremTag::BvNorm,
        TheoremTag::BvEnergy,
        TheoremTag::MaxPrinciple,
        TheoremTag::BoundarySign,
        TheoremTag::EqwOrder,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TheoremTag::GlobalLipschitz => "global_lipschitz",
            TheoremTag::Sobolev => "sobolev",
            TheoremTag::LocalLipschitz => "local_lipschitz",
            TheoremTag::Bv => "bv",
            TheoremTag::BvNorm => "bv_norm",
            TheoremTag::BvEnergy => "bv_energy",
            TheoremTag::MaxPrinciple => "max_principle",
            TheoremTag::BoundarySign => "boundary_sign",
            TheoremTag::EqwOrder => "eqw_order",
        }
    }
}

impl fmt::Display for TheoremTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s.replace('-', "_"))
            .ok_or_else(|| Error::Unknown {
                kind: "theorem tag",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    /// Decided later across a corpus.
    Deferred,
}

impl Outcome {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Pass => "true",
            Outcome::Fail => "false",
            Outcome::Deferred => "deferred",
        }
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true" => Ok(Outcome::Pass),
            "false" => Ok(Outcome::Fail),
            "deferred" => Ok(Outcome::Deferred),
            _ => Err(Error::Unknown {
                kind: "outcome",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub run_id: String,
    pub tag: TheoremTag,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub outcome: Outcome,
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub c: Option<f64>,
    pub k: Option<f64>,
    pub grid_id: String,
    pub mu: Option<f64>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub p: Option<f64>,
    pub r: Option<f64>,
    pub rho: Option<f64>,
}

impl EstimateReport {
    /// A decided report: passes iff `lhs ≤ rhs·(1 + slack)`.
    pub fn decided(tag: TheoremTag, lhs: f64, rhs: f64, slack: f64, grid: &Grid) -> Self {
        let mut r = Self::deferred(tag, lhs, rhs, slack, grid);
        r.outcome = Outcome::from_bool(r.holds());
        r
    }

    pub fn deferred(tag: TheoremTag, lhs: f64, rhs: f64, slack: f64, grid: &Grid) -> Self {
        EstimateReport {
            run_id: String::new(),
            tag,
            lhs,
            rhs,
            slack,
            outcome: Outcome::Deferred,
            c0: None,
            c1: None,
            c: None,
            k: None,
            grid_id: grid.id(),
            mu: None,
            eps: None,
            delta: None,
            lambda: None,
            p: None,
            r: None,
            rho: None,
        }
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + self.slack)
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }

    /// Records the solver parameters the checked solution came from.
    pub fn with_config(mut self, cfg: &SolverConfig) -> Self {
        self.eps = Some(cfg.eps);
        self.delta = Some(cfg.delta());
        self.lambda = Some(cfg.lambda());
        if let Parameterization::Mu(m) = cfg.param {
            self.mu = Some(m);
        }
        self
    }

    pub fn with_run_id(mut self, id: impl Into<String>) -> Self {
        self.run_id = id.into();
        self
    }
}

fn grad_norm(u: &ScalarField, p: f64) -> Result<f64> {
    field_norm(&gradient(u).magnitude(), p)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")))
    }
}

/// `‖∇u‖_∞` against `(1/λ)‖∇f‖_∞`. Decided on convex grids, deferred to
/// [`fit_constants`] otherwise.
pub fn check_global_lipschitz(u: &ScalarField, f: &ScalarField, lambda: f64, slack: f64) -> Result<EstimateReport> {
    u.ensure_same_grid(f)?;
    check_lambda(lambda)?;
    let lhs = grad_norm(u, f64::INFINITY)?;
    let rhs = grad_norm(f, f64::INFINITY)? / lambda;
    let grid = u.grid();
    let mut r = if grid.is_convex() {
        let mut r = EstimateReport::decided(TheoremTag::GlobalLipschitz, lhs, rhs, slack, grid);
        r.c0 = Some(0.0);
        r.c1 = Some(1.0);
        r
    } else {
        EstimateReport::deferred(TheoremTag::GlobalLipschitz, lhs, rhs, slack, grid)
    };
    r.lambda = Some(lambda);
    r.p = Some(f64::INFINITY);
    Ok(r)
}

/// `‖∇u‖_p ≤ (1/λ)‖∇f‖_p`, only for convex grids and `p ≥ 2`.
pub fn check_sobolev(u: &ScalarField, f: &ScalarField, p: f64, lambda: f64, slack: f64) -> Result<EstimateReport> {
    u.ensure_same_grid(f)?;
    check_lambda(lambda)?;
    if !(p >= 2.0) {
        return Err(Error::HypothesisUnmet(format!(
            "Sobolev preservation is only claimed for p >= 2, got {p}"
        )));
    }
    let grid = u.grid();
    if !grid.is_convex() {
        return Err(Error::HypothesisUnmet(format!("grid {} is not convex", grid.id())));
    }
    let lhs = grad_norm(u, p)?;
    let rhs = grad_norm(f, p)? / lambda;
    let mut r = EstimateReport::decided(TheoremTag::Sobolev, lhs, rhs, slack, grid);
    r.lambda = Some(lambda);
    r.p = Some(p);
    r.c0 = Some(0.0);
    r.c1 = Some(1.0);
    Ok(r)
}

/// Balls `B_R(x₀) ⊂ B_{(1+ρ)R}(x₀)`; on a grid a ball is the set of cells
/// whose centers lie in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalWindow {
    pub center: [f64; 2],
    pub radius: f64,
    pub rho: f64,
}

impl LocalWindow {
    pub fn new(center: [f64; 2], radius: f64, rho: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite() && rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "window needs R > 0 and rho > 0 (got {radius}, {rho})"
            )));
        }
        Ok(LocalWindow { center, radius, rho })
    }

    pub fn outer_radius(&self) -> f64 {
        (1.0 + self.rho) * self.radius
    }

    pub fn fits(&self, grid: &Grid) -> bool {
        grid.ball_inside(self.center, self.outer_radius())
    }

    fn sup_in(&self, values: &ScalarField, radius: f64) -> f64 {
        let grid = values.grid();
        (0..grid.len())
            .filter(|&k| {
                let x = grid.center(k);
                let d2: f64 = (0..grid.dim()).map(|a| (x[a] - self.center[a]).powi(2)).sum();
                d2 <= radius * radius
            })
            .fold(0.0, |m, k| m.max(values[k]))
    }
}

/// `K(R) = max(0, sup_{B_R}|∇u| − (1/λ) sup_{B_{(1+ρ)R}}|∇f|)·R²·λ/μ`.
/// Deferred; bounded `K` across an R-sweep is decided by [`fit_constants`].
pub fn check_local_lipschitz(
    u: &ScalarField,
    f: &ScalarField,
    window: &LocalWindow,
    lambda: f64,
    mu: f64,
) -> Result<EstimateReport> {
    u.ensure_same_grid(f)?;
    check_lambda(lambda)?;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let grid = u.grid();
    if !window.fits(grid) {
        return Err(Error::OutsideDomain);
    }
    let lhs = window.sup_in(&gradient(u).magnitude(), window.radius);
    let rhs = window.sup_in(&gradient(f).magnitude(), window.outer_radius()) / lambda;
    let k = (lhs - rhs).max(0.0) * window.radius * window.radius * lambda / mu;
    let mut r = EstimateReport::deferred(TheoremTag::LocalLipschitz, lhs, rhs, 0.0, grid);
    r.k = Some(k);
    r.lambda = Some(lambda);
    r.mu = Some(mu);
    r.p = Some(f64::INFINITY);
    r.r = Some(window.radius);
    r.rho = Some(window.rho);
    Ok(r)
}

fn require_1d(u: &ScalarField) -> Result<()> {
    if u.grid().dim() == 1 {
        Ok(())
    } else {
        Err(Error::NotOneDimensional)
    }
}

/// `TV(u) ≤ TV(f)`.
pub fn check_bv_1d(u: &ScalarField, f: &ScalarField, slack: f64) -> Result<EstimateReport> {
    u.ensure_same_grid(f)?;
    require_1d(u)?;
    let mut r = EstimateReport::decided(TheoremTag::Bv, total_variation(u), total_variation(f), slack, u.grid());
    r.p = Some(1.0);
    Ok(r)
}

/// `‖u‖₁ + TV(u) ≤ ‖f‖₁ + TV(f)`.
pub fn check_bv_norm_1d(u: &ScalarField, f: &ScalarField, slack: f64) -> Result<EstimateReport> {
    u.ensure_same_grid(f)?;
    require_1d(u)?;
    let norm = |v: &ScalarField| -> Result<f64> { Ok(field_norm(v, 1.0)? + total_variation(v)) };
    let mut r = EstimateReport::decided(TheoremTag::BvNorm, norm(u)?, norm(f)?, slack, u.grid());
    r.p = Some(1.0);
    Ok(r)
}

/// `TV(u) ≤ ‖f‖₂²/(2μ)`, which follows from `J_μ(u) ≤ J_μ(0)`.
pub fn check_bv_energy(u: &ScalarField, f: &ScalarField, mu: f64) -> Result<EstimateReport> {
    u.ensure_same_grid(f)?;
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let mut r = EstimateReport::decided(
        TheoremTag::BvEnergy,
        total_variation(u),
        f.dot(f) / (2.0 * mu),
        0.0,
        u.grid(),
    );
    r.mu = Some(mu);
    Ok(r)
}

/// `‖u‖_∞ ≤ (1/λ)‖f‖_∞ + 1e-8`.
pub fn check_max_principle(u: &ScalarField, f: &ScalarField, lambda: f64) -> Result<EstimateReport> {
    u.ensure_same_grid(f)?;
    check_lambda(lambda)?;
    let mut r = EstimateReport::decided(
        TheoremTag::MaxPrinciple,
        u.max_abs(),
        f.max_abs() / lambda + MAX_PRINCIPLE_TOL,
        0.0,
        u.grid(),
    );
    r.lambda = Some(lambda);
    Ok(r)
}

/// One μ of [`mu_invariance_sweep`].
#[derive(Debug, Clone)]
pub struct MuSweepRow {
    pub mu: f64,
    pub u: ScalarField,
    pub stages: Vec<StageRecord>,
    pub converged: bool,
    pub reports: Vec<EstimateReport>,
}

/// Solves `min μTV(u) + ½‖u − g‖²` (regularized as in `base`) for every μ
/// and checks the μ-free bounds against `g`. With `λ = 1/μ` and `f = g/μ`
/// every bound `(1/λ)‖·f‖` equals `‖·g‖`, so the rows carry the same
/// right-hand sides.
pub fn mu_invariance_sweep(g: &ScalarField, mus: &[f64], base: &SolverConfig, slack: f64) -> Result<Vec<MuSweepRow>> {
    let grid: &Arc<Grid> = g.grid();
    let mut rows = Vec::with_capacity(mus.len());
    for &mu in mus {
        let mut cfg = base.clone();
        cfg.param = Parameterization::Mu(mu);
        cfg.validate()?;
        let out = continuation_solve(g, &cfg, None)?;
        let u = out.u;
        let tag = |r: EstimateReport| r.with_config(&cfg);
        let mut reports = vec![tag(check_max_principle(&u, g, 1.0)?)];
        if grid.is_convex() {
            reports.push(tag(check_global_lipschitz(&u, g, 1.0, slack)?));
            reports.push(tag(check_sobolev(&u, g, 2.0, 1.0, slack)?));
        }
        if grid.dim() == 1 {
            reports.push(tag(check_bv_1d(&u, g, TV_SLACK)?));
        }
        rows.push(MuSweepRow {
            mu,
            converged: out.converged,
            stages: out.stages,
            u,
            reports,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantFit {
    pub tag: TheoremTag,
    pub c0: f64,
    /// Smallest `c₁` for which every report in the corpus satisfies the
    /// bound with the fitted `c₀`.
    pub c1: f64,
    /// Largest `K` for the local estimate.
    pub k: Option<f64>,
    /// max/min of the per-report constants.
    pub ratio: f64,
    pub stable: bool,
    pub samples: usize,
}

/// Fits the constants of `tag` over `corpus` and decides whether they are
/// stable (`max/min ≤ 10`) across the corpus.
///
/// Global Lipschitz: `λ‖∇u‖ ≈ c₁(‖∇f‖ + c₀)` by least squares with
/// `c₀ ≥ 0`; reports from convex grids fix `c₀ = 0`. The per-report
/// constants are `lhs/(rhs + c₀/λ)`. Local Lipschitz: the per-report
/// constants are the positive `K(R)`. Other tags use `lhs/rhs` with `c₀ = 0`.
pub fn fit_constants(corpus: &[EstimateReport], tag: TheoremTag) -> Result<ConstantFit> {
    let reports: Vec<&EstimateReport> = corpus.iter().filter(|r| r.tag == tag).collect();
    if reports.len() < MIN_CORPUS {
        return Err(Error::CorpusTooSmall {
            needed: MIN_CORPUS,
            got: reports.len(),
        });
    }
    let samples = reports.len();
    if tag == TheoremTag::LocalLipschitz {
        return Ok(fit_k(&reports));
    }

    // scaled pairs x = ‖∇f‖ (λ·rhs), y = λ‖∇u‖
    let lam = |r: &EstimateReport| r.lambda.unwrap_or(1.0);
    let xs: Vec<f64> = reports.iter().map(|r| r.rhs * lam(r)).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.lhs * lam(r)).collect();
    let all_decided = reports.iter().all(|r| r.outcome != Outcome::Deferred);
    let c0 = if tag == TheoremTag::GlobalLipschitz && !all_decided {
        least_squares_offset(&xs, &ys)
    } else {
        0.0
    };
    let per: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| if x + c0 > 0.0 { y / (x + c0) } else { 0.0 })
        .collect();
    let (ratio, stable) = stability(&per);
    Ok(ConstantFit {
        tag,
        c0,
        c1: per.iter().copied().fold(0.0, f64::max),
        k: None,
        ratio,
        stable,
        samples,
    })
}

/// max/min over the positive values, and whether it is within
/// [`STABILITY_RATIO`]. No positive value counts as stable.
fn stability(vals: &[f64]) -> (f64, bool) {
    let pos: Vec<f64> = vals.iter().copied().filter(|&v| v > 0.0).collect();
    if pos.is_empty() {
        return (1.0, true);
    }
    let hi = pos.iter().copied().fold(f64::MIN, f64::max);
    let lo = pos.iter().copied().fold(f64::MAX, f64::min);
    let ratio = hi / lo;
    (ratio, ratio <= STABILITY_RATIO)
}

fn fit_k(reports: &[&EstimateReport]) -> ConstantFit {
    let ks: Vec<f64> = reports.iter().map(|r| r.k.unwrap_or(0.0)).collect();
    let (ratio, stable) = stability(&ks);
    ConstantFit {
        tag: TheoremTag::LocalLipschitz,
        c0: 0.0,
        c1: 1.0,
        k: Some(ks.iter().copied().fold(0.0, f64::max)),
        ratio,
        stable,
        samples: reports.len(),
    }
}

/// `K(R)` stability over the radii of one solve. An R-sweep is a handful of
/// windows rather than a corpus of sources, so only two radii are required.
pub fn fit_r_sweep(sweep: &[EstimateReport]) -> Result<ConstantFit> {
    let reports: Vec<&EstimateReport> = sweep.iter().filter(|r| r.tag == TheoremTag::LocalLipschitz).collect();
    if reports.len() < 2 {
        return Err(Error::CorpusTooSmall {
            needed: 2,
            got: reports.len(),
        });
    }
    Ok(fit_k(&reports))
}

/// Intercept-over-slope `c₀ = b/a` of the least-squares line `y = a x + b`,
/// clamped to `c₀ ≥ 0`.
fn least_squares_offset(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return 0.0;
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    if a > 0.0 && b > 0.0 {
        b / a
    } else {
        0.0
    }
}

/// Writes the fitted constants into the matching reports and decides the
/// deferred ones by the stability verdict.
pub fn apply_fit(reports: &mut [EstimateReport], fit: &ConstantFit) {
    for r in reports.iter_mut().filter(|r| r.tag == fit.tag) {
        match fit.tag {
            TheoremTag::LocalLipschitz => r.c = fit.k,
            _ => {
                r.c0 = Some(fit.c0);
                r.c1 = Some(fit.c1);
            }
        }
        if r.outcome == Outcome::Deferred {
            r.outcome = Outcome::from_bool(fit.stable);
        }
    }
}
