//! Reference minimizers of `J_μ(u) = μ‖∇u‖₁ + ½‖u − f‖₂²`.
//!
//! [`taut_string_1d`] is exact up to rounding on intervals. [`dual_projection`]
//! works on any grid and certifies its accuracy through the duality gap.

use crate::error::{Error, Result};
use crate::field::{divergence, gradient, total_variation, ScalarField, VectorField};

/// Discrete `J_μ(u) = μ‖∇u‖₁ + ½‖u − f‖₂²`.
pub fn energy_tv(u: &ScalarField, f: &ScalarField, mu: f64) -> Result<f64> {
    u.ensure_same_grid(f)?;
    let diff = u.sub(f);
    Ok(mu * total_variation(u) + 0.5 * diff.dot(&diff))
}

/// Discrete `∫ δ|∇u|²/2 + √(ε + |∇u|²) + ½∫(u − f)²`, with `|∇u|²` the
/// squared forward-face gradient owned by each cell.
pub fn energy_regularized(u: &ScalarField, f: &ScalarField, eps: f64, delta: f64) -> Result<f64> {
    energy_regularized_lambda(u, f, eps, delta, 1.0)
}

/// Energy whose Euler–Lagrange equation is
/// `−δΔu − div(∇u/√(ε+|∇u|²)) + λu = f`:
/// `∫ δ|∇u|²/2 + √(ε+|∇u|²) + (λ/2)∫(u − f/λ)²`.
pub fn energy_regularized_lambda(
    u: &ScalarField,
    f: &ScalarField,
    eps: f64,
    delta: f64,
    lambda: f64,
) -> Result<f64> {
    u.ensure_same_grid(f)?;
    if eps < 0.0 || delta < 0.0 || lambda <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "need eps >= 0, delta >= 0, lambda > 0 (got {eps}, {delta}, {lambda})"
        )));
    }
    let s = gradient(u).magnitude_sq();
    let m = u.grid().cell_measure();
    let grad_part: f64 = s
        .values()
        .iter()
        .map(|&s| 0.5 * delta * s + (eps + s).sqrt())
        .sum();
    let data_part: f64 = u
        .values()
        .iter()
        .zip(f.values())
        .map(|(&u, &f)| {
            let d = u - f / lambda;
            d * d
        })
        .sum();
    Ok(m * (grad_part + 0.5 * lambda * data_part))
}

/// Exact minimizer of `μ Σ|u_{i+1} − u_i| + (h/2) Σ (u_i − f_i)²` on an
/// interval, by the taut-string construction run directly on the samples:
/// a segment is extended while the running dual variable stays within the
/// tube, and closed with a jump as soon as it leaves it.
pub fn taut_string_1d(f: &ScalarField, mu: f64) -> Result<ScalarField> {
    let grid = f.grid();
    if grid.dim() != 1 {
        return Err(Error::NotOneDimensional);
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let lambda = mu / grid.spacing(0);
    let out = taut_string_samples(f.values(), lambda);
    Ok(ScalarField::from_raw(grid.clone(), out))
}

/// Minimizes `λ Σ|x_{i+1} − x_i| + ½ Σ (x_i − y_i)²`.
fn taut_string_samples(y: &[f64], lambda: f64) -> Vec<f64> {
    let n = y.len();
    let mut x = vec![0.0; n];
    if n == 0 {
        return x;
    }
    // k: current sample, k0: start of the open segment, kplus/kminus: last
    // positions where the upper/lower bound was attained.
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let (mut umin, mut umax) = (lambda, -lambda);
    let (mut vmin, mut vmax) = (y[0] - lambda, y[0] + lambda);
    let two_lambda = 2.0 * lambda;
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                // segment value too high: close it at vmin with a downward jump
                while k0 <= kminus {
                    x[k0] = vmin;
                    k0 += 1;
                }
                kminus = k0;
                k = k0;
                vmin = y[k];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                while k0 <= kplus {
                    x[k0] = vmax;
                    k0 += 1;
                }
                kplus = k0;
                k = k0;
                vmax = y[k];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                while k0 <= k {
                    x[k0] = vmin;
                    k0 += 1;
                }
                return x;
            }
        }
        umin += y[k + 1] - vmin;
        if umin < -lambda {
            while k0 <= kminus {
                x[k0] = vmin;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = y[k];
            vmax = vmin + two_lambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        umax += y[k + 1] - vmax;
        if umax > lambda {
            while k0 <= kplus {
                x[k0] = vmax;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = y[k];
            vmin = vmax - two_lambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        k += 1;
        if umin >= lambda {
            kminus = k;
            vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
            umin = lambda;
        }
        if umax <= -lambda {
            kplus = k;
            vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
            umax = -lambda;
        }
    }
}

/// Dual iterate of the projection method: `u = f + div q` with `|q| ≤ μ`
/// cell-wise.
#[derive(Debug, Clone)]
pub struct DualState {
    pub q: VectorField,
    pub u: ScalarField,
    pub iterations: usize,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct DualOutcome {
    pub u: ScalarField,
    pub state: DualState,
    pub converged: bool,
    pub initial_gap: f64,
    /// Dual energy `½‖f + div q‖²` of the accepted iterate, one entry per
    /// iteration (entry 0 is the starting point).
    pub dual_energies: Vec<f64>,
}

fn project_ball(q: &mut [Vec<f64>], mu: f64) {
    let n = q[0].len();
    for k in 0..n {
        let norm = q.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt();
        if norm > mu {
            let s = mu / norm;
            for c in q.iter_mut() {
                c[k] *= s;
            }
        }
    }
}

fn duality_gap(u: &ScalarField, q: &VectorField, mu: f64) -> f64 {
    let du = gradient(u);
    (mu * total_variation(u) - du.dot(q)).max(0.0)
}

/// Projected-gradient iteration on the dual of `J_μ`,
/// `min_{|q| ≤ μ} ½‖f + div q‖²`, with step `1/‖div‖²` (the classical
/// stable value, `‖div‖² ≤ Σ 4/h²`) and monotone Nesterov extrapolation.
/// Stops when the duality gap falls below `tol · gap₀`.
pub fn dual_projection(f: &ScalarField, mu: f64, tol: f64, max_iter: usize) -> Result<DualOutcome> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let grid = f.grid().clone();
    let tau = 1.0
        / (0..grid.dim())
            .map(|a| 4.0 / (grid.spacing(a) * grid.spacing(a)))
            .sum::<f64>();
    let dual_energy = |u: &ScalarField| 0.5 * u.dot(u);

    let mut x = VectorField::zeros(grid.clone());
    let mut u_x = f.clone();
    let mut e_x = dual_energy(&u_x);
    let initial_gap = duality_gap(&u_x, &x, mu);
    let mut gap = initial_gap;
    let mut energies = vec![e_x];
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let target = tol * initial_gap;
    let mut converged = gap <= target;

    while !converged && iterations < max_iter {
        iterations += 1;
        let u_y = f.add(&divergence(&y));
        let step = gradient(&u_y);
        let mut z: Vec<Vec<f64>> = y
            .components()
            .iter()
            .zip(step.components())
            .map(|(yc, sc)| yc.iter().zip(sc).map(|(a, b)| a + tau * b).collect())
            .collect();
        project_ball(&mut z, mu);
        let z = VectorField::from_raw(grid.clone(), z);
        let u_z = f.add(&divergence(&z));
        let e_z = dual_energy(&u_z);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let x_prev = x;
        let accept = e_z <= e_x;
        let (x_new, u_new, e_new) = if accept {
            (z.clone(), u_z, e_z)
        } else {
            (x_prev.clone(), u_x.clone(), e_x)
        };
        if accept {
            // y = x + (t/t')(z - x) + ((t-1)/t')(x - x_prev), with z == x
            let beta = (t - 1.0) / t_next;
            let comps = x_new
                .components()
                .iter()
                .zip(x_prev.components())
                .map(|(a, b)| a.iter().zip(b).map(|(a, b)| a + beta * (a - b)).collect())
                .collect();
            y = VectorField::from_raw(grid.clone(), comps);
            t = t_next;
        } else {
            // restart the momentum from the last accepted point
            y = x_new.clone();
            t = 1.0;
        }
        x = x_new;
        u_x = u_new;
        e_x = e_new;
        energies.push(e_x);
        gap = duality_gap(&u_x, &x, mu);
        converged = gap <= target;
    }

    Ok(DualOutcome {
        u: u_x.clone(),
        state: DualState {
            q: x,
            u: u_x,
            iterations,
            gap,
        },
        converged,
        initial_gap,
        dual_energies: energies,
    })
}
