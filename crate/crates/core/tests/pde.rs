use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvreg_core::field::{gradient, vector_norm, Side};
use tvreg_core::pde::*;
use tvreg_core::reference::taut_string_1d;
use tvreg_core::{build_grid, DomainSpec, ScalarField, VectorField};

fn random_field(g: &std::sync::Arc<tvreg_core::Grid>, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    ScalarField::new(g.clone(), v).unwrap()
}

fn smooth_1d(n: usize) -> ScalarField {
    let g = build_grid(&DomainSpec::interval(n, 1.0)).unwrap();
    ScalarField::from_fn(g, |x| {
        20.0 * (PI * x[0]).cos() + 8.0 * (3.0 * PI * x[0]).sin() + 3.0 * (7.0 * PI * x[0]).cos()
    })
}

fn assert_solution_invariants(f: &ScalarField, lambda: f64, sol: &Solution) {
    for w in sol.trace.steps.windows(2) {
        assert!(w[1].energy <= w[0].energy + 1e-10, "{} -> {}", w[0].energy, w[1].energy);
    }
    let (lo, hi) = (f.min() / lambda, f.max() / lambda);
    assert!(sol.u.min() >= lo - 1e-8 && sol.u.max() <= hi + 1e-8);
    assert!((lambda * sol.u.mean() - f.mean()).abs() < 1e-10);
}

#[test]
fn operator_is_symmetric() {
    for spec in [
        DomainSpec::interval(40, 1.0),
        DomainSpec::rectangle(12, 9, 1.0, 0.8),
        DomainSpec::l_shape(12, 1.0),
    ] {
        let g = build_grid(&spec).unwrap();
        let uk = random_field(&g, 1);
        let cfg = SolverConfig::new(0.05, Parameterization::Lambda(0.7));
        let sys = assemble_system(&uk, &uk, &cfg).unwrap();
        let (v, w) = (random_field(&g, 2), random_field(&g, 3));
        let a = sys.apply(&v).dot(&w);
        let b = v.dot(&sys.apply(&w));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        let floor = cfg.delta() + 1.0 / (cfg.eps + gradient(&uk).magnitude_sq().max()).sqrt();
        assert!(sys.min_coefficient() >= floor - 1e-15);
    }
}

#[test]
fn linear_solve_consistency() {
    let g = build_grid(&DomainSpec::rectangle(20, 20, 1.0, 1.0)).unwrap();
    let uk = random_field(&g, 4);
    let cfg = SolverConfig::new(0.1, Parameterization::Lambda(1.0));
    let sys = assemble_system(&uk, &uk, &cfg).unwrap();
    let v = random_field(&g, 5);
    let out = linear_solve(&sys, &sys.apply(&v), 1e-12, 10_000, None).unwrap();
    assert!(out.converged);
    assert!(out.x.sub(&v).max_abs() < 1e-8);

    let ones = VectorField::from_faces(g.clone(), |_, _| 1.0);
    let c = ScalarField::constant(g.clone(), 3.0);
    let sys = LinearSystem::from_coefficients(ones, 1.0, c.clone()).unwrap();
    let out = linear_solve(&sys, &c, 1e-12, 100, None).unwrap();
    assert!(out.x.sub(&c).max_abs() < 1e-12);
}

#[test]
fn linear_solve_condition_sweep() {
    // coefficients spread over [δ, δ + ε^{-1/2}]
    let g = build_grid(&DomainSpec::interval(256, 1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    eprintln!("eps      iterations");
    for eps in [1e-1f64, 1e-2, 1e-3, 1e-4] {
        let delta = eps;
        let coeff = VectorField::from_faces(g.clone(), |_, _| 0.0);
        let comps = vec![(0..g.len())
            .map(|k| {
                if g.neighbor(k, 0, Side::Plus).is_some() {
                    delta + rng.random_range(0.0..1.0) / eps.sqrt()
                } else {
                    0.0
                }
            })
            .collect()];
        let coeff = VectorField::new(coeff.grid().clone(), comps).unwrap();
        let rhs = random_field(&g, 12);
        let sys = LinearSystem::from_coefficients(coeff, 1.0, rhs.clone()).unwrap();
        let out = linear_solve(&sys, &rhs, 1e-10, 20_000, None).unwrap();
        eprintln!("{eps:<8e} {}", out.iterations);
        assert!(out.converged, "eps {eps}");
    }
}

#[test]
fn residual_vanishes_at_constant_solution() {
    let g = build_grid(&DomainSpec::l_shape(10, 1.0)).unwrap();
    let f = ScalarField::constant(g.clone(), 3.0);
    let cfg = SolverConfig::new(0.01, Parameterization::Lambda(1.5));
    let u = ScalarField::constant(g, 2.0);
    assert!(nonlinear_residual(&u, &f, &cfg).unwrap().max_abs() < 1e-14);
}

#[test]
fn converged_solve_meets_its_postconditions() {
    let f = smooth_1d(256);
    for lambda in [0.5, 1.0, 4.0] {
        let cfg = SolverConfig::new(1e-2, Parameterization::Lambda(lambda));
        let sol = solve_regularized(&f, &cfg).unwrap();
        assert!(sol.converged);
        let res = nonlinear_residual(&sol.u, &f, &cfg).unwrap().max_abs();
        assert!(res <= cfg.outer_tol * (f.max_abs() + lambda * f.max_abs()));
        assert_solution_invariants(&f, lambda, &sol);
    }
}

#[test]
fn smooth_bump_gradient_bound() {
    let g = build_grid(&DomainSpec::rectangle(48, 48, 1.0, 1.0)).unwrap();
    let f = ScalarField::from_fn(g, |x| {
        let r2 = (x[0] - 0.45).powi(2) + (x[1] - 0.55).powi(2);
        30.0 * (-r2 / 0.04).exp()
    });
    let cfg = SolverConfig::new(1e-2, Parameterization::Lambda(1.0));
    let sol = solve_regularized(&f, &cfg).unwrap();
    assert!(sol.converged);
    assert_solution_invariants(&f, 1.0, &sol);
    let gf = vector_norm(&gradient(&f), f64::INFINITY).unwrap();
    let gu = vector_norm(&gradient(&sol.u), f64::INFINITY).unwrap();
    assert!(gu <= 1.05 * gf, "{gu} vs {gf}");
}

#[test]
fn parameterizations_give_the_same_system() {
    // λ = 4 and μ = 1/4 translate exactly in binary, so the two solves must
    // agree to rounding.
    let f = smooth_1d(128);
    let a = solve_regularized(&f, &SolverConfig::new(1e-2, Parameterization::Lambda(4.0))).unwrap();
    let g = f.scale(0.25);
    let b = solve_regularized(&g, &SolverConfig::new(1e-2, Parameterization::Mu(0.25))).unwrap();
    assert!(a.u.sub(&b.u).max_abs() <= 1e-12 * a.u.max_abs().max(1.0));

    let lambda = 3.0;
    let c = solve_regularized(&f, &SolverConfig::new(1e-2, Parameterization::Lambda(lambda)).with_tolerances(1e-10, 1e-12)).unwrap();
    let d = solve_regularized(
        &f.scale(1.0 / lambda),
        &SolverConfig::new(1e-2, Parameterization::Mu(1.0 / lambda)).with_tolerances(1e-10, 1e-12),
    )
    .unwrap();
    assert!(c.converged && d.converged);
    assert!(c.u.sub(&d.u).max_abs() <= 1e-8 * c.u.max_abs());
}

#[test]
fn continuation_approaches_the_taut_string() {
    let f = smooth_1d(512);
    let oracle = taut_string_1d(&f, 1.0).unwrap();
    let cfg = SolverConfig::new(1e-1, Parameterization::Lambda(1.0)).with_eps_schedule(&[1e-1, 1e-2, 1e-3, 1e-4]);
    let out = continuation_solve(&f, &cfg, Some(&oracle)).unwrap();
    assert!(out.converged);
    let rel: Vec<f64> = out.stages.iter().map(|s| s.oracle_distance.unwrap().1).collect();
    for w in rel.windows(2) {
        assert!(w[1] < w[0], "{rel:?}");
    }
    assert!(*rel.last().unwrap() <= 1e-2, "{rel:?}");
}

#[test]
fn continuation_of_constant_data() {
    let g = build_grid(&DomainSpec::rectangle(10, 10, 1.0, 1.0)).unwrap();
    let f = ScalarField::constant(g, 3.0);
    let cfg = SolverConfig::new(1e-1, Parameterization::Lambda(2.0)).with_eps_schedule(&[1e-1, 1e-2, 1e-3]);
    let out = continuation_solve(&f, &cfg, None).unwrap();
    assert_eq!(out.stages.len(), 3);
    assert!(out.converged);
    assert!(out.u.values().iter().all(|&v| (v - 1.5).abs() < 1e-14));
}

#[test]
fn max_iterations_flag_non_convergence() {
    let f = smooth_1d(128);
    let mut cfg = SolverConfig::new(1e-4, Parameterization::Lambda(1.0));
    cfg.max_outer = 1;
    let sol = solve_regularized(&f, &cfg).unwrap();
    assert!(!sol.converged);
    assert_eq!(sol.trace.status, SolveStatus::MaxOuterIterations);
    assert_eq!(sol.trace.outer_iterations(), 1);
}
