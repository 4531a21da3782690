//! reports.csv, traces.csv, ASCII fields and plot tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tvreg_core::pde::SolveStatus;
use tvreg_core::{EstimateReport, Outcome, ScalarField, TheoremTag};

use crate::error::CliError;
use crate::suite::{PlotTable, ReportBundle};

pub const REPORT_HEADER: [&str; 18] = [
    "run_id",
    "theorem_tag",
    "lhs",
    "rhs",
    "slack",
    "pass",
    "c0",
    "c1",
    "C",
    "K",
    "grid_id",
    "mu",
    "eps",
    "delta",
    "lambda",
    "p",
    "R",
    "rho",
];

/// Shortest representation that parses back to the same bits; exponent
/// form outside `[1e-4, 1e16)`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if x == 0.0 || (1e-4..1e16).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), fmt_f64)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path).map_err(io_err(path))
}

pub fn write_reports(path: &Path, reports: &[EstimateReport]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record([
            r.run_id.clone(),
            r.tag.as_str().into(),
            fmt_f64(r.lhs),
            fmt_f64(r.rhs),
            fmt_f64(r.slack),
            r.outcome.as_str().into(),
            opt(r.c0),
            opt(r.c1),
            opt(r.c),
            opt(r.k),
            r.grid_id.clone(),
            opt(r.mu),
            opt(r.eps),
            opt(r.delta),
            opt(r.lambda),
            opt(r.p),
            opt(r.r),
            opt(r.rho),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_reports(path: &Path) -> Result<Vec<EstimateReport>, CliError> {
    let mut rd = csv::Reader::from_reader(fs::File::open(path).map_err(io_err(path))?);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != REPORT_HEADER {
        return Err(CliError::Parse(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| -> Result<f64, CliError> { s.parse().map_err(|_| CliError::Parse(format!("bad number `{s}`"))) };
    let opt = |s: &str| -> Result<Option<f64>, CliError> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s).map(Some)
        }
    };
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let tag: TheoremTag = f(1).parse().map_err(|_| CliError::Parse(format!("bad tag `{}`", f(1))))?;
        let outcome: Outcome = f(5).parse().map_err(|_| CliError::Parse(format!("bad pass `{}`", f(5))))?;
        out.push(EstimateReport {
            run_id: f(0).to_string(),
            tag,
            lhs: num(f(2))?,
            rhs: num(f(3))?,
            slack: num(f(4))?,
            outcome,
            c0: opt(f(6))?,
            c1: opt(f(7))?,
            c: opt(f(8))?,
            k: opt(f(9))?,
            grid_id: f(10).to_string(),
            mu: opt(f(11))?,
            eps: opt(f(12))?,
            delta: opt(f(13))?,
            lambda: opt(f(14))?,
            p: opt(f(15))?,
            r: opt(f(16))?,
            rho: opt(f(17))?,
        });
    }
    Ok(out)
}

fn status(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxOuterIterations => "max_outer_iterations",
        SolveStatus::InnerCapExceeded => "inner_cap_exceeded",
    }
}

/// One row per outer step of every stage of every solve. The oracle
/// distance is filled on the last step of a stage.
pub fn write_traces(path: &Path, bundle: &ReportBundle) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "run_id",
        "stage",
        "eps",
        "delta",
        "step",
        "energy",
        "residual",
        "inner_iterations",
        "newton",
        "status",
        "threshold",
        "oracle_l2",
        "oracle_rel_l2",
    ])?;
    for solve in &bundle.solves {
        for (si, st) in solve.stages.iter().enumerate() {
            let last = st.trace.steps.len() - 1;
            for (k, step) in st.trace.steps.iter().enumerate() {
                let (d, rel) = match st.oracle_distance {
                    Some((d, rel)) if k == last => (fmt_f64(d), fmt_f64(rel)),
                    _ => (String::new(), String::new()),
                };
                w.write_record([
                    solve.label.clone(),
                    si.to_string(),
                    fmt_f64(st.stage.eps),
                    fmt_f64(st.stage.delta),
                    k.to_string(),
                    fmt_f64(step.energy),
                    fmt_f64(step.residual),
                    step.inner_iterations.to_string(),
                    step.newton.to_string(),
                    status(st.trace.status).into(),
                    fmt_f64(st.trace.threshold),
                    d,
                    rel,
                ])?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Header lines `dims nx ny`, `h hx hy`, `bbox x0 y0 x1 y1`, then one value
/// per bounding-box cell in row-major order (x fastest), `nan` outside the
/// domain.
pub fn field_text(name: &str, field: &ScalarField) -> String {
    let grid = field.grid();
    let [nx, ny] = grid.shape();
    let [hx, hy] = grid.h();
    let [lx, ly] = grid.extent();
    let mut out = format!(
        "# {name}\ndims {nx} {ny}\nh {} {}\nbbox 0 0 {} {}\n",
        fmt_f64(hx),
        fmt_f64(hy),
        fmt_f64(lx),
        fmt_f64(ly)
    );
    for j in 0..ny {
        for i in 0..nx {
            match grid.index(i as isize, j as isize) {
                Some(k) => out.push_str(&fmt_f64(field[k])),
                None => out.push_str("nan"),
            }
            out.push('\n');
        }
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

pub fn write_plot(dir: &Path, table: &PlotTable) -> Result<(), CliError> {
    let path = dir.join(format!("{}.csv", table.name));
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(())
}

/// Writes the whole bundle under `dir` and returns the paths written.
pub fn emit_reports(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let fields = dir.join("fields");
    let plots = dir.join("plotdata");
    for d in [dir, &fields, &plots] {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }
    let mut written = Vec::new();

    let path = dir.join("reports.csv");
    write_reports(&path, &bundle.reports)?;
    written.push(path);
    let path = dir.join("traces.csv");
    write_traces(&path, bundle)?;
    written.push(path);
    let path = dir.join("config.txt");
    write_text(&path, &format!("# tvreg {}\n{}", bundle.version, bundle.config_echo))?;
    written.push(path);

    for s in &bundle.solves {
        let mut items = vec![("f", &s.input), ("u", &s.u)];
        if let Some(o) = &s.oracle {
            items.push(("oracle", o));
        }
        for (kind, field) in items {
            let name = format!("{}_{kind}", s.label);
            let path = fields.join(format!("{name}.txt"));
            write_text(&path, &field_text(&name, field))?;
            written.push(path);
        }
    }
    for t in &bundle.plots {
        write_plot(&plots, t)?;
        written.push(plots.join(format!("{}.csv", t.name)));
    }
    Ok(written)
}
