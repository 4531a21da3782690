use std::f64::consts::PI;
use std::sync::Arc;

use tvreg_core::bernstein::*;
use tvreg_core::field::{distance_field, gradient, vector_norm};
use tvreg_core::pde::{nonlinear_residual, solve_regularized, Parameterization, SolverConfig};
use tvreg_core::{build_grid, DomainSpec, Grid, ScalarField};

// ε large enough that (ε + |∇u|²)^{-1/2} varies on a length the grids resolve
const EPS: f64 = 1.0;
const DELTA: f64 = 0.1;
const LAMBDA: f64 = 1.0;

fn square(n: usize) -> Arc<Grid> {
    build_grid(&DomainSpec::rectangle(n, n, 1.0, 1.0)).unwrap()
}

fn interval(n: usize) -> Arc<Grid> {
    build_grid(&DomainSpec::interval(n, 1.0)).unwrap()
}

fn catalog() -> Vec<(ManufacturedField, fn(usize) -> Arc<Grid>)> {
    vec![
        (ManufacturedField::CosProduct { amp: 0.5, kx: 1.0, ky: 1.0 }, square),
        (ManufacturedField::CosProduct { amp: 0.3, kx: 2.0, ky: 1.0 }, square),
        (ManufacturedField::NeumannCubic { amp: 0.5 }, square),
        (ManufacturedField::CosProduct { amp: 1.0, kx: 1.0, ky: 0.0 }, interval),
        (ManufacturedField::NeumannCubic { amp: 1.0 }, interval),
    ]
}

/// Smallest observed order over successive halvings; an error that reaches
/// zero counts as converged.
fn min_order(errors: &[f64]) -> f64 {
    errors
        .windows(2)
        .map(|w| if w[1] == 0.0 { f64::INFINITY } else { (w[0] / w[1]).log2() })
        .fold(f64::INFINITY, f64::min)
}

fn refine<F: Fn(&Arc<Grid>) -> f64>(make: fn(usize) -> Arc<Grid>, sizes: &[usize], err: F) -> Vec<f64> {
    sizes.iter().map(|&n| err(&make(n))).collect()
}

/// Three levels past the pre-asymptotic range: the cosine products have a
/// saddle where `√(ε + |∇u|²)` drops to `√ε`.
fn levels(make: fn(usize) -> Arc<Grid>) -> Vec<usize> {
    if make(4).dim() == 2 {
        vec![32, 64, 128]
    } else {
        vec![128, 256, 512]
    }
}

#[test]
fn operator_converges_to_analytic_expression() {
    for (field, make) in catalog() {
        let errs = refine(make, &levels(make), |g| {
            let dim = g.dim();
            let u = ScalarField::from_fn(g.clone(), |x| field.partial(x, 0, 0));
            let w = ScalarField::from_fn(g.clone(), |x| {
                let gx = field.partial(x, 1, 0);
                let gy = if dim == 2 { field.partial(x, 0, 1) } else { 0.0 };
                gx * gx + gy * gy
            });
            let exact = ScalarField::from_fn(g.clone(), |x| field.l_of_w_at(x, dim, EPS, DELTA));
            let l = elliptic_operator_l(&w, &u, EPS, DELTA).unwrap();
            interior_max_abs(&l.sub(&exact), INTERIOR_BAND)
        });
        assert!(min_order(&errs) >= 1.0, "{field:?}: {errs:?}");
    }
}

#[test]
fn identity_residuals_converge_on_manufactured_pairs() {
    for (field, make) in catalog() {
        let eqw = refine(make, &levels(make), |g| {
            let (u, f) = manufactured_source(&field, EPS, DELTA, LAMBDA, g).unwrap();
            interior_max_abs(&eqw_residual(&u, &f, EPS, DELTA, LAMBDA).unwrap(), INTERIOR_BAND)
        });
        assert!(min_order(&eqw) >= 0.8, "eqw {field:?}: {eqw:?}");
        let div = refine(make, &levels(make), |g| {
            let (u, f) = manufactured_source(&field, EPS, DELTA, LAMBDA, g).unwrap();
            interior_max_abs(&divform_residual(&u, &f, EPS, DELTA, LAMBDA).unwrap(), DIVFORM_BAND)
        });
        assert!(min_order(&div) >= 0.8, "div-form {field:?}: {div:?}");
    }
}

#[test]
fn subsolution_violations_shrink_on_manufactured_pairs() {
    for (field, make) in catalog() {
        let v = refine(make, &levels(make), |g| {
            let (u, f) = manufactured_source(&field, EPS, DELTA, LAMBDA, g).unwrap();
            subsolution_margin(&u, &f, EPS, DELTA, LAMBDA, DEFAULT_C).unwrap().max_violation
        });
        assert!(min_order(&v) >= 0.8, "{field:?}: {v:?}");
    }
}

#[test]
fn localized_violations_shrink_on_manufactured_pair() {
    let field = ManufacturedField::CosProduct { amp: 0.5, kx: 1.0, ky: 1.0 };
    // outer radius 0.375
    let cut = CutoffProfile::new([0.5, 0.5], 0.3125, 0.2).unwrap();
    let v = refine(square, &[16, 32, 64, 128], |g| {
        let (u, f) = manufactured_source(&field, EPS, DELTA, LAMBDA, g).unwrap();
        localized_inequality_check(&u, &f, EPS, DELTA, LAMBDA, &cut, DEFAULT_C)
            .unwrap()
            .max_violation
    });
    assert!(min_order(&v) >= 0.8, "{v:?}");
}

#[test]
fn unit_cutoff_reduces_to_subsolution_margin() {
    let g = square(40);
    let field = ManufacturedField::NeumannCubic { amp: 1.0 };
    let (u, f) = manufactured_source(&field, EPS, DELTA, LAMBDA, &g).unwrap();
    let a = subsolution_margin(&u, &f, EPS, DELTA, LAMBDA, 2.0).unwrap();
    let b = localized_inequality_check(&u, &f, EPS, DELTA, LAMBDA, &CutoffProfile::unit(), 2.0).unwrap();
    assert_eq!(a.cells, b.cells);
    for &k in &a.cells {
        assert!((a.excess[k] - b.excess[k]).abs() <= 1e-12 * a.excess[k].abs().max(1.0));
    }
}

#[test]
fn manufactured_residual_halves_with_h() {
    for (field, make) in catalog() {
        let cfg = SolverConfig::new(EPS, Parameterization::Lambda(LAMBDA)).with_delta(DELTA);
        let r = refine(make, &levels(make), |g| {
            let (u, f) = manufactured_source(&field, EPS, DELTA, LAMBDA, g).unwrap();
            nonlinear_residual(&u, &f, &cfg).unwrap().max_abs()
        });
        for w in r.windows(2) {
            assert!(w[0] >= 1.7 * w[1], "{field:?}: {r:?}");
        }
    }
}

#[test]
fn solver_recovers_manufactured_solutions() {
    // the closed-form pair u = cos(πx), ε = 1, δ = 0, λ = 1
    let field = ManufacturedField::CosProduct { amp: 1.0, kx: 1.0, ky: 0.0 };
    let cfg = SolverConfig::new(1.0, Parameterization::Lambda(1.0)).with_delta(0.0);
    let errs = refine(interval, &[32, 64, 128], |g| {
        let (u, f) = manufactured_source(&field, 1.0, 0.0, 1.0, g).unwrap();
        let sol = solve_regularized(&f, &cfg).unwrap();
        assert!(sol.converged);
        sol.u.sub(&u).max_abs()
    });
    assert!(min_order(&errs) >= 0.8, "{errs:?}");

    let field = ManufacturedField::CosProduct { amp: 0.5, kx: 1.0, ky: 1.0 };
    let cfg = SolverConfig::new(EPS, Parameterization::Lambda(LAMBDA)).with_delta(DELTA);
    let errs = refine(square, &[32, 64, 128], |g| {
        let (u, f) = manufactured_source(&field, EPS, DELTA, LAMBDA, g).unwrap();
        let sol = solve_regularized(&f, &cfg).unwrap();
        assert!(sol.converged);
        sol.u.sub(&u).max_abs()
    });
    assert!(min_order(&errs) >= 0.8, "{errs:?}");
}

fn smooth_1d(n: usize) -> ScalarField {
    ScalarField::from_fn(interval(n), |x| (PI * x[0]).cos() + 0.5 * (3.0 * PI * x[0]).sin())
}

#[test]
fn identities_on_a_smooth_solve() {
    // The solver discretizes the equation on faces and the identity uses
    // centered stencils, so the residual on a solve is a consistency error:
    // it is compared with h times the largest term of the identity.
    let (eps, delta, lambda) = (1e-2, 1e-2, 1.0);
    let mut rel = Vec::new();
    for n in [128, 256, 512] {
        let f = smooth_1d(n);
        let h = 1.0 / n as f64;
        let cfg = SolverConfig::new(eps, Parameterization::Lambda(lambda)).with_delta(delta);
        let sol = solve_regularized(&f, &cfg).unwrap();
        assert!(sol.converged);
        let res = interior_max_abs(&eqw_residual(&sol.u, &f, eps, delta, lambda).unwrap(), INTERIOR_BAND);
        let hs = hessian_norm_sq(&sol.u);
        let w = squared_gradient(&sol.u);
        let term = interior_cells(f.grid(), INTERIOR_BAND)
            .into_iter()
            .map(|k| 2.0 * hs[k] / (eps + w[k]).sqrt())
            .fold(0.0, f64::max);
        assert!(res <= 10.0 * h * term, "n {n}: {res} vs {term}");
        rel.push(res / term);

        let m = subsolution_margin(&sol.u, &f, eps, delta, lambda, DEFAULT_C).unwrap();
        assert!(m.fraction_above(10.0 * h) <= 0.05, "n {n}");
    }
    assert!(rel.windows(2).all(|w| w[1] < w[0]), "{rel:?}");
}

fn wavy(x: [f64; 2]) -> f64 {
    3.0 * (2.0 * x[0] + x[1]).sin() + 2.0 * x[0] * x[1]
}

#[test]
fn boundary_derivative_of_weighted_field() {
    let cfg = SolverConfig::new(1e-2, Parameterization::Lambda(1.0));
    for n in [32, 64] {
        let h = 1.0 / n as f64;
        let g = square(n);
        assert_eq!(gamma_bound(&g), 0.0);
        let sol = solve_regularized(&ScalarField::from_fn(g.clone(), wavy), &cfg).unwrap();
        assert!(sol.converged);
        let r = boundary_sign_check(&sol.u, 0.0).unwrap();
        assert!(r.max <= 10.0 * h, "square {n}: {}", r.max);
        assert!(r.excluded_cells.is_empty());
        // the maximum of z = w is not on the boundary
        let z = weighted_field(&squared_gradient(&sol.u), &distance_field(&g), 0.0).unwrap();
        assert!(!g.is_boundary_cell(z.argmax()));

        let g = build_grid(&DomainSpec::l_shape(n, 1.0)).unwrap();
        let sol = solve_regularized(&ScalarField::from_fn(g.clone(), wavy), &cfg).unwrap();
        assert!(sol.converged);
        let gamma = gamma_bound(&g);
        let r = boundary_sign_check(&sol.u, gamma).unwrap();
        assert!(r.max <= 10.0 * h, "L-shape {n}: {}", r.max);
        assert!(!r.excluded_cells.is_empty());
        assert!(gu_bounded(&sol.u, &g));
    }
}

fn gu_bounded(u: &ScalarField, g: &Arc<Grid>) -> bool {
    let f = ScalarField::from_fn(g.clone(), wavy);
    vector_norm(&gradient(u), 2.0).unwrap() <= vector_norm(&gradient(&f), 2.0).unwrap()
}

#[test]
fn hessian_bounds_the_gradient_of_w_on_solves() {
    // |D²u|² ≥ |∇w|²/(4w) from ∇w = 2D²u∇u, up to the O(h²) difference
    // between the two centered stencils
    let g = square(64);
    let cfg = SolverConfig::new(1e-1, Parameterization::Lambda(1.0));
    let sol = solve_regularized(&ScalarField::from_fn(g.clone(), wavy), &cfg).unwrap();
    let b = BernsteinFields::compute(&sol.u, 1e-1, cfg.delta(), 0.0).unwrap();
    let dw = centered_derivatives(&b.w);
    let h = 1.0 / 64.0;
    for k in interior_cells(&g, INTERIOR_BAND) {
        if b.w[k] > 1e-12 {
            let bound = dw.gradient_sq(k) / (4.0 * b.w[k]);
            assert!(b.hessian_norm_sq[k] >= bound * (1.0 - 20.0 * h * h) - 1e-9, "{k}");
        }
    }
}
