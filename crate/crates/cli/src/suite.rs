//! Generate or load data, solve, check, and collect everything into a bundle.

use std::sync::Arc;

use rayon::prelude::*;
use tvreg_core::bernstein::{
    boundary_sign_check, divform_residual, eqw_residual, gamma_bound, interior_max_abs, manufactured_source,
    subsolution_margin, DEFAULT_C, DIVFORM_BAND, INTERIOR_BAND,
};
use tvreg_core::field::{gradient, total_variation, vector_norm};
use tvreg_core::pde::{continuation_solve, StageRecord};
use tvreg_core::regularity::{
    apply_fit, check_bv_1d, check_bv_energy, check_bv_norm_1d, check_global_lipschitz, check_local_lipschitz,
    check_max_principle, check_sobolev, fit_constants, fit_r_sweep, mu_invariance_sweep, MIN_CORPUS,
};
use tvreg_core::{
    build_grid, generate_source, taut_string_1d, EstimateReport, Grid, LocalWindow, Outcome, ScalarField,
    SolverConfig, TheoremTag,
};

use crate::config::{ExperimentConfig, SourceSpec, SweepKind};
use crate::error::CliError;
use crate::output::fmt_f64;
use crate::pgm::load_pgm;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Check,
    Sweep,
    Mms,
}

/// One solved field and its provenance.
#[derive(Debug, Clone)]
pub struct SolveRecord {
    pub label: String,
    /// The data as generated or loaded.
    pub input: ScalarField,
    /// `rhs/λ`: the bounds are checked against this field at `λ = 1`.
    pub data: ScalarField,
    pub u: ScalarField,
    pub oracle: Option<ScalarField>,
    pub config: SolverConfig,
    pub stages: Vec<StageRecord>,
    pub converged: bool,
}

/// A CSV table under `plotdata/`; cells are already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub run_id: String,
    pub reports: Vec<EstimateReport>,
    pub solves: Vec<SolveRecord>,
    pub plots: Vec<PlotTable>,
    pub config_echo: String,
    pub version: &'static str,
    /// Human-readable remarks, e.g. why a report stayed deferred.
    pub notes: Vec<String>,
}

impl ReportBundle {
    pub fn converged(&self) -> bool {
        self.solves.iter().all(|s| s.converged)
    }

    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.outcome == Outcome::Pass)
    }

    /// The exit-code contract: every check passed and every solve converged.
    pub fn success(&self) -> bool {
        self.converged() && self.all_passed()
    }
}

/// Worker count from `TVREG_THREADS`, default 1.
pub fn threads_from_env() -> usize {
    std::env::var("TVREG_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

pub fn run_suite(cmd: Command, cfg: &ExperimentConfig, threads: usize) -> Result<ReportBundle, CliError> {
    let mut bundle = ReportBundle {
        run_id: cfg.run_id.clone(),
        reports: Vec::new(),
        solves: Vec::new(),
        plots: Vec::new(),
        config_echo: cfg.settings.echo(),
        version: VERSION,
        notes: Vec::new(),
    };
    match cmd {
        Command::Solve | Command::Check => run_corpus(cmd == Command::Check, cfg, threads, &mut bundle)?,
        Command::Sweep => run_sweeps(cfg, &mut bundle)?,
        Command::Mms => run_mms(cfg, &mut bundle)?,
    }
    Ok(bundle)
}

fn load_source(cfg: &ExperimentConfig, index: usize) -> Result<ScalarField, CliError> {
    match &cfg.source {
        SourceSpec::Image(path) => load_pgm(path),
        SourceSpec::Synthetic { kind, seed } => {
            let grid = build_grid(&cfg.domain).map_err(CliError::at("grid"))?;
            let src = generate_source(kind, &grid, seed.wrapping_add(index as u64)).map_err(CliError::at("source"))?;
            Ok(src.field)
        }
    }
}

fn label(cfg: &ExperimentConfig, index: usize) -> String {
    if cfg.sources == 1 {
        cfg.run_id.clone()
    } else {
        format!("{}-s{index}", cfg.run_id)
    }
}

fn solve(label: String, input: ScalarField, solver: &SolverConfig, oracle: bool) -> Result<SolveRecord, CliError> {
    let lambda = solver.lambda();
    let data = solver.param.rhs(&input).scale(1.0 / lambda);
    let oracle = if oracle && input.grid().dim() == 1 {
        Some(taut_string_1d(&data, 1.0 / lambda).map_err(CliError::at("oracle"))?)
    } else {
        None
    };
    let out = continuation_solve(&input, solver, oracle.as_ref()).map_err(CliError::at("solve"))?;
    Ok(SolveRecord {
        label,
        input,
        data,
        u: out.u,
        oracle,
        config: solver.clone(),
        stages: out.stages,
        converged: out.converged,
    })
}

fn radii(cfg: &ExperimentConfig, grid: &Grid) -> Vec<f64> {
    cfg.window.radii.clone().unwrap_or_else(|| {
        let [lx, ly] = grid.extent();
        let l = if grid.dim() == 1 { lx } else { lx.min(ly) };
        [0.1, 0.2, 0.4].iter().map(|f| f * l).collect()
    })
}

fn window_center(cfg: &ExperimentConfig, grid: &Grid) -> [f64; 2] {
    cfg.window.center.unwrap_or_else(|| {
        let [lx, ly] = grid.extent();
        [0.5 * lx, if grid.dim() == 1 { 0.0 } else { 0.5 * ly }]
    })
}

/// The local estimate over the configured radii, decided by `K(R)`
/// stability when there are at least two radii.
fn r_sweep(cfg: &ExperimentConfig, rec: &SolveRecord, strict: bool) -> Result<Vec<EstimateReport>, CliError> {
    let grid = rec.u.grid();
    let lambda = rec.config.lambda();
    let rhs = rec.data.scale(lambda);
    let center = window_center(cfg, grid);
    let mut out = Vec::new();
    for r in radii(cfg, grid) {
        let w = LocalWindow::new(center, r, cfg.window.rho).map_err(CliError::at("check"))?;
        if !strict && !w.fits(grid) {
            continue;
        }
        let rep = check_local_lipschitz(&rec.u, &rhs, &w, lambda, 1.0 / lambda).map_err(CliError::at("check"))?;
        out.push(rep.with_config(&rec.config).with_run_id(rec.label.clone()));
    }
    if out.len() >= 2 {
        let fit = fit_r_sweep(&out).map_err(CliError::at("fit"))?;
        apply_fit(&mut out, &fit);
    }
    Ok(out)
}

fn checks_for(cfg: &ExperimentConfig, rec: &SolveRecord) -> Result<Vec<EstimateReport>, CliError> {
    let (u, g) = (&rec.u, &rec.data);
    let grid = u.grid();
    let strict = !cfg.all_checks;
    let one_d = grid.dim() == 1;
    let at = CliError::at("check");
    let mut out = Vec::new();
    for &tag in &cfg.checks {
        match tag {
            TheoremTag::GlobalLipschitz => out.push(check_global_lipschitz(u, g, 1.0, cfg.slack.gradient).map_err(at)?),
            TheoremTag::Sobolev => {
                if !strict && !grid.is_convex() {
                    continue;
                }
                for &p in &cfg.p_values {
                    if p == 1.0 && one_d {
                        if !cfg.checks.contains(&TheoremTag::Bv) {
                            out.push(check_bv_1d(u, g, cfg.slack.tv).map_err(at)?);
                        }
                        continue;
                    }
                    out.push(check_sobolev(u, g, p, 1.0, cfg.slack.gradient).map_err(at)?);
                }
            }
            TheoremTag::LocalLipschitz => out.extend(r_sweep(cfg, rec, strict)?),
            TheoremTag::Bv | TheoremTag::BvNorm if !strict && !one_d => {}
            TheoremTag::Bv => out.push(check_bv_1d(u, g, cfg.slack.tv).map_err(at)?),
            TheoremTag::BvNorm => out.push(check_bv_norm_1d(u, g, cfg.slack.tv).map_err(at)?),
            TheoremTag::BvEnergy => {
                out.push(check_bv_energy(u, g, 1.0 / rec.config.lambda()).map_err(at)?);
            }
            TheoremTag::MaxPrinciple => out.push(check_max_principle(u, g, 1.0).map_err(at)?),
            TheoremTag::BoundarySign => {
                // ∂w/∂ν scales like u², so it is measured in units of ‖∇g‖∞²
                // for the allowance in units of h to be scale-free
                let b = boundary_sign_check(u, gamma_bound(grid)).map_err(at)?;
                let scale = vector_norm(&gradient(g), f64::INFINITY).map_err(at)?.powi(2);
                let lhs = if scale > 0.0 { b.max / scale } else { b.max };
                let bound = cfg.slack.boundary * grid.min_spacing();
                out.push(EstimateReport::decided(tag, lhs, bound, 0.0, grid));
            }
            TheoremTag::EqwOrder => {}
        }
    }
    Ok(out
        .into_iter()
        .map(|r| r.with_config(&rec.config).with_run_id(rec.label.clone()))
        .collect())
}

fn run_corpus(check: bool, cfg: &ExperimentConfig, threads: usize, bundle: &mut ReportBundle) -> Result<(), CliError> {
    let one = |i: usize| -> Result<(SolveRecord, Vec<EstimateReport>), CliError> {
        let rec = solve(label(cfg, i), load_source(cfg, i)?, &cfg.solver, cfg.oracle)?;
        let reports = if check { checks_for(cfg, &rec)? } else { Vec::new() };
        Ok((rec, reports))
    };
    let results: Vec<_> = if threads > 1 && cfg.sources > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..cfg.sources).into_par_iter().map(one).collect())
    } else {
        (0..cfg.sources).map(one).collect()
    };
    for r in results {
        let (rec, reports) = r?;
        bundle.solves.push(rec);
        bundle.reports.extend(reports);
    }

    let deferred = bundle
        .reports
        .iter()
        .filter(|r| r.tag == TheoremTag::GlobalLipschitz && r.outcome == Outcome::Deferred)
        .count();
    if deferred > 0 {
        match fit_constants(&bundle.reports, TheoremTag::GlobalLipschitz) {
            Ok(fit) => {
                bundle.notes.push(format!(
                    "global_lipschitz fit over {} sources: c0 = {}, c1 = {}, ratio = {}, stable = {}",
                    fit.samples,
                    fmt_f64(fit.c0),
                    fmt_f64(fit.c1),
                    fmt_f64(fit.ratio),
                    fit.stable
                ));
                apply_fit(&mut bundle.reports, &fit);
            }
            Err(_) => bundle.notes.push(format!(
                "global_lipschitz stays deferred: the domain is not convex and the constants need a corpus of at least {MIN_CORPUS} sources"
            )),
        }
    }
    Ok(())
}

fn run_sweeps(cfg: &ExperimentConfig, bundle: &mut ReportBundle) -> Result<(), CliError> {
    let data = load_source(cfg, 0)?;
    if matches!(cfg.sweep, SweepKind::Mu | SweepKind::Both) {
        let g = cfg.solver.param.rhs(&data).scale(1.0 / cfg.solver.lambda());
        let rows = mu_invariance_sweep(&g, &cfg.mu_sweep, &cfg.solver, cfg.slack.gradient).map_err(CliError::at("sweep"))?;
        let mut table = PlotTable {
            name: "mu_sweep",
            header: vec!["mu", "converged", "tv_u", "grad_inf_u", "grad_inf_rhs", "grad_2_rhs", "pass"],
            rows: Vec::new(),
        };
        for (i, row) in rows.into_iter().enumerate() {
            let label = format!("{}-mu{i}", cfg.run_id);
            let rhs_of = |tag: TheoremTag| {
                row.reports
                    .iter()
                    .find(|r| r.tag == tag)
                    .map_or(String::new(), |r| fmt_f64(r.rhs))
            };
            table.rows.push(vec![
                fmt_f64(row.mu),
                row.converged.to_string(),
                fmt_f64(total_variation(&row.u)),
                fmt_f64(vector_norm(&gradient(&row.u), f64::INFINITY).map_err(CliError::at("sweep"))?),
                rhs_of(TheoremTag::GlobalLipschitz),
                rhs_of(TheoremTag::Sobolev),
                row.reports.iter().all(EstimateReport::passed).to_string(),
            ]);
            bundle
                .reports
                .extend(row.reports.into_iter().map(|r| r.with_run_id(label.clone())));
            let mut config = cfg.solver.clone();
            config.param = tvreg_core::Parameterization::Mu(row.mu);
            bundle.solves.push(SolveRecord {
                label,
                input: g.clone(),
                data: g.clone(),
                u: row.u,
                oracle: None,
                config,
                stages: row.stages,
                converged: row.converged,
            });
        }
        bundle.plots.push(table);
    }
    if matches!(cfg.sweep, SweepKind::Radius | SweepKind::Both) {
        let rec = solve(format!("{}-r", cfg.run_id), data, &cfg.solver, false)?;
        let reports = r_sweep(cfg, &rec, true)?;
        let mut table = PlotTable {
            name: "r_sweep",
            header: vec!["R", "rho", "sup_grad_u", "sup_grad_f", "K", "C", "pass"],
            rows: Vec::new(),
        };
        for r in &reports {
            let opt = |v: Option<f64>| v.map_or(String::new(), fmt_f64);
            table.rows.push(vec![
                opt(r.r),
                opt(r.rho),
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                opt(r.k),
                opt(r.c),
                r.outcome.as_str().to_string(),
            ]);
        }
        if reports.len() < 2 {
            bundle.notes.push("local_lipschitz needs at least two radii to decide K(R) stability".into());
        }
        bundle.reports.extend(reports);
        bundle.solves.push(rec);
        bundle.plots.push(table);
    }
    Ok(())
}

/// Observed orders `log₂(e_{k−1}/e_k)`; an error that reaches zero counts
/// as converged.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .map(|w| if w[1] == 0.0 { f64::INFINITY } else { (w[0] / w[1]).log2() })
        .collect()
}

fn run_mms(cfg: &ExperimentConfig, bundle: &mut ReportBundle) -> Result<(), CliError> {
    let m = &cfg.mms;
    let at = CliError::at("mms");
    let mut eqw = Vec::new();
    let mut div = Vec::new();
    let mut sub = Vec::new();
    let mut grids: Vec<Arc<Grid>> = Vec::new();
    for spec in &m.domains {
        let grid = build_grid(spec).map_err(CliError::at("grid"))?;
        let (u, f) = manufactured_source(&m.field, m.eps, m.delta, m.lambda, &grid).map_err(at)?;
        eqw.push(interior_max_abs(&eqw_residual(&u, &f, m.eps, m.delta, m.lambda).map_err(at)?, INTERIOR_BAND));
        div.push(interior_max_abs(&divform_residual(&u, &f, m.eps, m.delta, m.lambda).map_err(at)?, DIVFORM_BAND));
        sub.push(subsolution_margin(&u, &f, m.eps, m.delta, m.lambda, DEFAULT_C).map_err(at)?.max_violation);
        grids.push(grid);
    }
    let orders = [observed_orders(&eqw), observed_orders(&div), observed_orders(&sub)];
    let cell = |o: &[f64], i: usize| if i == 0 { String::new() } else { fmt_f64(o[i - 1]) };
    let mut table = PlotTable {
        name: "h_order",
        header: vec![
            "n",
            "h",
            "eqw_residual",
            "eqw_order",
            "divform_residual",
            "divform_order",
            "subsolution_violation",
            "subsolution_order",
        ],
        rows: Vec::new(),
    };
    for (i, grid) in grids.iter().enumerate() {
        table.rows.push(vec![
            m.levels[i].to_string(),
            fmt_f64(grid.min_spacing()),
            fmt_f64(eqw[i]),
            cell(&orders[0], i),
            fmt_f64(div[i]),
            cell(&orders[1], i),
            fmt_f64(sub[i]),
            cell(&orders[2], i),
        ]);
    }
    bundle.plots.push(table);

    // required order on the left, smallest observed order on the right
    let worst = orders[0].iter().copied().fold(f64::INFINITY, f64::min);
    let finest = grids.last().expect("at least two levels");
    let mut r = EstimateReport::decided(TheoremTag::EqwOrder, m.min_order, worst, 0.0, finest);
    r.eps = Some(m.eps);
    r.delta = Some(m.delta);
    r.lambda = Some(m.lambda);
    bundle.reports.push(r.with_run_id(cfg.run_id.clone()));
    Ok(())
}
