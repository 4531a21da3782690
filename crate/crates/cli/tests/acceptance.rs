//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero
//! exit if any fails.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvreg_cli::suite::threads_from_env;
use tvreg_cli::{emit_reports, run_suite, Command, ExperimentConfig, ReportBundle, Settings};
use tvreg_core::bernstein::boundary_sign_check;
use tvreg_core::field::{divergence, gradient};
use tvreg_core::regularity::check_max_principle;
use tvreg_core::{
    build_grid, continuation_solve, dual_projection, solve_regularized, taut_string_1d, DomainSpec, Grid,
    Outcome, Parameterization, ScalarField, SolverConfig, TheoremTag, VectorField,
};

type Check = Result<(bool, String), String>;

struct Lab {
    dir: tempfile::TempDir,
    /// `(label, u, g)`: every solve, to be checked against `‖g‖∞` at λ = 1.
    solves: Vec<(String, ScalarField, ScalarField)>,
    /// Suites run so far, for the determinism rerun.
    suites: Vec<(String, Command, Vec<String>)>,
    failed: usize,
}

impl Lab {
    fn suite(&mut self, name: &str, cmd: Command, pairs: &[&str]) -> Result<ReportBundle, String> {
        let pairs: Vec<String> = pairs.iter().map(|s| s.to_string()).collect();
        let bundle = run_pairs(cmd, &pairs, threads_from_env())?;
        emit_reports(&bundle, &self.dir.path().join(name)).map_err(|e| e.to_string())?;
        for s in &bundle.solves {
            self.solves.push((format!("{name}/{}", s.label), s.u.clone(), s.data.clone()));
        }
        self.suites.push((name.to_string(), cmd, pairs));
        Ok(bundle)
    }

    fn criterion(&mut self, no: usize, name: &str, budget: Option<Duration>, body: impl FnOnce(&mut Lab) -> Check) {
        let start = Instant::now();
        let result = body(self);
        let took = start.elapsed();
        let (mut ok, mut detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        if let Some(b) = budget {
            if took > b {
                ok = false;
                detail.push_str(&format!("; over the {:.0} s budget", b.as_secs_f64()));
            }
        }
        if !ok {
            self.failed += 1;
        }
        println!(
            "{} {no:>2} {name} ({:.2} s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
}

fn run_pairs(cmd: Command, pairs: &[String], threads: usize) -> Result<ReportBundle, String> {
    let mut s = Settings::default();
    for p in pairs {
        s.set_pair(p).map_err(|e| e.to_string())?;
    }
    let cfg = ExperimentConfig::from_settings(s).map_err(|e| e.to_string())?;
    run_suite(cmd, &cfg, threads).map_err(|e| e.to_string())
}

fn grid(spec: DomainSpec) -> Arc<Grid> {
    build_grid(&spec).unwrap()
}

fn random_field(g: &Arc<Grid>, rng: &mut ChaCha8Rng) -> ScalarField {
    ScalarField::new(g.clone(), (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn worst(bundle: &ReportBundle, tag: TheoremTag) -> (usize, usize, f64) {
    let rs: Vec<_> = bundle.reports.iter().filter(|r| r.tag == tag).collect();
    let pass = rs.iter().filter(|r| r.passed()).count();
    let ratio = rs.iter().map(|r| r.lhs / r.rhs).fold(0.0, f64::max);
    (pass, rs.len(), ratio)
}

fn adjointness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grids = [
        grid(DomainSpec::interval(64, 1.0)),
        grid(DomainSpec::rectangle(24, 17, 1.0, 0.7)),
        grid(DomainSpec::l_shape(24, 1.0)),
        grid(DomainSpec::disc(24, 1.0)),
    ];
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let g = &grids[i % grids.len()];
        let u = random_field(g, &mut rng);
        let comps = (0..g.dim())
            .map(|_| (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let p = VectorField::new(g.clone(), comps).unwrap();
        let a = divergence(&p).dot(&u);
        let b = p.dot(&gradient(&u));
        worst = worst.max((a + b).abs() / a.abs().max(b.abs()));
    }
    Ok((worst <= 1e-12, format!("max relative |<div p,u> + <p,grad u>| = {worst:.2e} over 100 pairs")))
}

fn oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = grid(DomainSpec::interval(512, 1.0));
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let f = random_field(&g, &mut rng);
        let ts = taut_string_1d(&f, 0.05).map_err(|e| e.to_string())?;
        let dp = dual_projection(&f, 0.05, 1e-8, 200_000).map_err(|e| e.to_string())?;
        worst = worst.max(ts.sub(&dp.u).max_abs());
    }
    Ok((worst <= 1e-4, format!("max sup difference {worst:.2e} over 20 signals")))
}

fn smooth_1d(n: usize) -> ScalarField {
    ScalarField::from_fn(grid(DomainSpec::interval(n, 1.0)), |x| {
        20.0 * (PI * x[0]).cos() + 8.0 * (3.0 * PI * x[0]).sin() + 3.0 * (7.0 * PI * x[0]).cos()
    })
}

fn continuation_limit(lab: &mut Lab) -> Check {
    let f = smooth_1d(512);
    let oracle = taut_string_1d(&f, 1.0).map_err(|e| e.to_string())?;
    let cfg = SolverConfig::new(1e-1, Parameterization::Lambda(1.0)).with_eps_schedule(&[1e-1, 1e-2, 1e-3, 1e-4]);
    let out = continuation_solve(&f, &cfg, Some(&oracle)).map_err(|e| e.to_string())?;
    let rel: Vec<f64> = out.stages.iter().map(|s| s.oracle_distance.unwrap().1).collect();
    lab.solves.push(("continuation".into(), out.u, f));
    let decreasing = rel.windows(2).all(|w| w[1] < w[0]);
    let last = *rel.last().unwrap();
    let list: Vec<String> = rel.iter().map(|r| format!("{r:.2e}")).collect();
    Ok((
        out.converged && decreasing && last <= 1e-2,
        format!("relative L2 distance by stage [{}], converged {}", list.join(", "), out.converged),
    ))
}

fn convex_corpus(lab: &mut Lab) -> Result<ReportBundle, String> {
    lab.suite(
        "convex_corpus",
        Command::Check,
        &[
            "n=128",
            "source=smoothed_noise",
            "source.sigma=0.1",
            "source.amp=100",
            "sources=10",
            "seed=1000",
            "lambda=1",
            "eps_schedule=0.1,0.01,0.001",
            "checks=sobolev,global_lipschitz",
        ],
    )
}

fn bv_corpus(lab: &mut Lab) -> Check {
    let common = ["domain=interval", "n=512", "mu=0.05", "eps_schedule=0.1,0.01,0.001,0.0001", "checks=bv,bv_norm,bv_energy"];
    let runs: [(&str, &[&str]); 5] = [
        ("bv_step", &["source=step", "source.pos=0.37"]),
        ("bv_step_high", &["source=step", "source.pos=0.6", "source.height=3"]),
        ("bv_trig", &["source=trig", "source.kx=5"]),
        ("bv_step_trig", &["source=step_trig"]),
        ("bv_noise", &["source=smoothed_noise", "source.sigma=0.01", "source.amp=5", "sources=4", "seed=7"]),
    ];
    let mut bv = (0, 0, 0.0);
    let mut energy = (0, 0, 0.0);
    let mut converged = true;
    for (name, extra) in runs {
        let pairs: Vec<&str> = common.iter().chain(extra.iter()).copied().collect();
        let b = lab.suite(name, Command::Check, &pairs)?;
        converged &= b.converged();
        let w = worst(&b, TheoremTag::Bv);
        bv = (bv.0 + w.0, bv.1 + w.1, f64::max(bv.2, w.2));
        let w = worst(&b, TheoremTag::BvEnergy);
        energy = (energy.0 + w.0, energy.1 + w.1, f64::max(energy.2, w.2));
    }
    Ok((
        converged && bv.0 == bv.1 && energy.0 == energy.1 && bv.1 == 8,
        format!(
            "TV(u) <= (1+1e-3) TV(f): {}/{} (max ratio {:.3}); TV(u) <= |f|^2/(2 mu): {}/{} (max ratio {:.3})",
            bv.0, bv.1, bv.2, energy.0, energy.1, energy.2
        ),
    ))
}

fn wavy(x: [f64; 2]) -> f64 {
    3.0 * (2.0 * x[0] + x[1]).sin() + 2.0 * x[0] * x[1]
}

fn boundary_sign(lab: &mut Lab) -> Check {
    let cfg = SolverConfig::new(1e-2, Parameterization::Lambda(1.0));
    let mut maxima = Vec::new();
    let mut ok = true;
    for n in [64, 128] {
        let g = grid(DomainSpec::rectangle(n, n, 1.0, 1.0));
        let f = ScalarField::from_fn(g.clone(), wavy);
        let sol = solve_regularized(&f, &cfg).map_err(|e| e.to_string())?;
        let b = boundary_sign_check(&sol.u, 0.0).map_err(|e| e.to_string())?;
        ok &= sol.converged && b.max <= 10.0 / n as f64;
        maxima.push(b.max);
        lab.solves.push((format!("boundary{n}"), sol.u, f));
    }
    let (a, b) = (maxima[0].max(0.0), maxima[1].max(0.0));
    let ratio = if a > 0.0 { b / a } else { 0.0 };
    // with no positive part at the coarse level both must be nonpositive
    ok &= if a > 0.0 { ratio <= 0.7 } else { b == 0.0 };
    Ok((
        ok,
        format!(
            "max dw/dnu = {:.3e} (h=1/64), {:.3e} (h=1/128), positive-part ratio {ratio:.3}",
            maxima[0], maxima[1]
        ),
    ))
}

fn mms(lab: &mut Lab) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, pairs) in [
        ("mms_cos", vec!["mms.field=cos_product", "mms.amp=0.5"]),
        ("mms_cos21", vec!["mms.field=cos_product", "mms.amp=0.3", "mms.kx=2"]),
        ("mms_cubic", vec!["mms.field=neumann_cubic", "mms.amp=0.5"]),
    ] {
        let b = lab.suite(name, Command::Mms, &pairs)?;
        let r = &b.reports[0];
        ok &= r.passed();
        let res: Vec<String> = b.plots[0].rows.iter().map(|row| row[2].clone()).collect();
        parts.push(format!("{name} order {:.2} (residuals {})", r.rhs, res.join(" > ")));
    }
    Ok((ok, parts.join("; ")))
}

fn r_sweep(lab: &mut Lab) -> Check {
    let b = lab.suite(
        "r_sweep",
        Command::Sweep,
        &[
            "sweep=r",
            "n=96",
            "source=smoothed_noise",
            "source.sigma=0.1",
            "source.amp=60",
            "seed=9",
            "lambda=1",
            "eps_schedule=0.1,0.01,0.001",
        ],
    )?;
    let rs: Vec<_> = b.reports.iter().filter(|r| r.tag == TheoremTag::LocalLipschitz).collect();
    let ks: Vec<f64> = rs.iter().map(|r| r.k.unwrap()).collect();
    let pos: Vec<f64> = ks.iter().copied().filter(|&k| k > 0.0).collect();
    let ratio = if pos.is_empty() {
        1.0
    } else {
        pos.iter().copied().fold(0.0, f64::max) / pos.iter().copied().fold(f64::MAX, f64::min)
    };
    let ok = b.converged() && rs.len() == 3 && rs.iter().all(|r| r.passed()) && ratio <= 10.0;
    Ok((ok, format!("K(R) at R = 0.1, 0.2, 0.4: {ks:?}; stability ratio {ratio:.3}")))
}

fn mu_sweep(lab: &mut Lab) -> Check {
    let b = lab.suite(
        "mu_sweep",
        Command::Sweep,
        &[
            "sweep=mu",
            "n=64",
            "source=smoothed_noise",
            "source.sigma=0.1",
            "source.amp=2",
            "seed=5",
            "mu_sweep=0.1,1,10",
            "eps_schedule=0.1,0.01,0.001",
        ],
    )?;
    let mut ok = b.converged();
    let mut parts = Vec::new();
    for tag in [TheoremTag::GlobalLipschitz, TheoremTag::Sobolev] {
        let rs: Vec<_> = b.reports.iter().filter(|r| r.tag == tag).collect();
        let same = rs.windows(2).all(|w| w[0].rhs.to_bits() == w[1].rhs.to_bits());
        let pass = rs.iter().all(|r| r.passed());
        ok &= rs.len() == 3 && same && pass;
        parts.push(format!("{tag}: {} rows, all pass {pass}, identical rhs {same} ({})", rs.len(), rs[0].rhs));
    }
    Ok((ok, parts.join("; ")))
}

fn lshape_corpus(lab: &mut Lab) -> Check {
    let b = lab.suite(
        "lshape_corpus",
        Command::Check,
        &[
            "domain=lshape",
            "n=64",
            "source=smoothed_noise",
            "source.sigma=0.1",
            "source.amp=60",
            "sources=10",
            "seed=2000",
            "lambda=1",
            "eps_schedule=0.1,0.01,0.001",
            "checks=global_lipschitz",
        ],
    )?;
    let rs: Vec<_> = b.reports.iter().filter(|r| r.tag == TheoremTag::GlobalLipschitz).collect();
    let ok = b.converged() && rs.len() == 10 && rs.iter().all(|r| r.passed());
    let fit = b.notes.first().cloned().unwrap_or_default();
    Ok((ok, format!("{} of {} decided pass; {fit}", rs.iter().filter(|r| r.passed()).count(), rs.len())))
}

fn max_principle(lab: &mut Lab) -> Check {
    let mut worst = f64::NEG_INFINITY;
    let mut fails = 0;
    for (label, u, g) in &lab.solves {
        let r = check_max_principle(u, g, 1.0).map_err(|e| format!("{label}: {e}"))?;
        if r.outcome != Outcome::Pass {
            fails += 1;
        }
        worst = worst.max(r.lhs - r.rhs);
    }
    Ok((
        fails == 0,
        format!("{} solves, {fails} violations, max (|u|inf - |g|inf - 1e-8) = {worst:.3e}", lab.solves.len()),
    ))
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(lab: &mut Lab) -> Check {
    let threads = if threads_from_env() == 1 { 2 } else { 1 };
    let mut differing = Vec::new();
    let mut files = 0;
    for (name, cmd, pairs) in &lab.suites {
        let again = lab.dir.path().join(format!("{name}.rerun"));
        let b = run_pairs(*cmd, pairs, threads)?;
        emit_reports(&b, &again).map_err(|e| e.to_string())?;
        let (x, y) = (tree(&lab.dir.path().join(name)), tree(&again));
        files += x.len();
        if x != y {
            differing.push(name.clone());
        }
    }
    Ok((
        differing.is_empty(),
        format!(
            "{} suites rerun with {threads} worker thread(s), {files} files compared, differing: {differing:?}",
            lab.suites.len()
        ),
    ))
}

fn main() {
    let mut lab = Lab {
        dir: tempfile::tempdir().expect("temp dir"),
        solves: Vec::new(),
        suites: Vec::new(),
        failed: 0,
    };
    let secs = Duration::from_secs;

    lab.criterion(1, "adjointness", Some(secs(1)), |_| adjointness());
    lab.criterion(2, "oracle equivalence", Some(secs(10)), |_| oracle_equivalence());
    lab.criterion(3, "continuation limit", Some(secs(30)), continuation_limit);

    let start = Instant::now();
    let corpus = convex_corpus(&mut lab);
    let corpus_time = start.elapsed();
    let corpus_ref = corpus.as_ref().map_err(|e| e.clone());
    lab.criterion(4, "Sobolev norm preservation", None, |_| {
        let b = corpus_ref.clone()?;
        let (pass, n, ratio) = worst(b, TheoremTag::Sobolev);
        let ok = b.converged() && n == 40 && pass == n && corpus_time <= secs(120);
        Ok((
            ok,
            format!(
                "{pass}/{n} reports pass over p in {{2,4,8,inf}}, max ratio {ratio:.4}, corpus {:.1} s",
                corpus_time.as_secs_f64()
            ),
        ))
    });
    lab.criterion(5, "convex Lipschitz constants", None, |_| {
        let b = corpus_ref.clone()?;
        let rs: Vec<_> = b.reports.iter().filter(|r| r.tag == TheoremTag::GlobalLipschitz).collect();
        let ok = rs.len() == 10
            && rs.iter().all(|r| r.passed() && r.c0 == Some(0.0) && r.c1 == Some(1.0) && r.lhs <= 1.05 * r.rhs);
        let ratio = rs.iter().map(|r| r.lhs / r.rhs).fold(0.0, f64::max);
        Ok((ok, format!("{} reports, max |grad u|inf / |grad f|inf = {ratio:.4}", rs.len())))
    });

    lab.criterion(6, "BV preservation", None, bv_corpus);
    lab.criterion(7, "boundary sign", None, boundary_sign);
    lab.criterion(8, "eqw convergence order", Some(secs(60)), mms);
    lab.criterion(9, "R-sweep stability", None, r_sweep);
    lab.criterion(10, "mu invariance", None, mu_sweep);
    lab.criterion(11, "nonconvex constant stability", None, lshape_corpus);
    lab.criterion(12, "maximum principle", None, max_principle);
    lab.criterion(13, "determinism", None, determinism);

    if lab.failed > 0 {
        println!("{} criteria failed", lab.failed);
        std::process::exit(1);
    }
    println!("all 13 criteria pass");
}
