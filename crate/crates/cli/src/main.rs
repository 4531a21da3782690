use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tvreg_cli::suite::threads_from_env;
use tvreg_cli::{emit_reports, run_suite, Command, ExperimentConfig, Settings};

#[derive(Parser)]
#[command(name = "tvreg", version, about = "Solve TV-regularized problems and check their gradient estimates")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", value_name = "K=V", global = true)]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "tvreg-out")]
    out: PathBuf,
    /// Seed for random sources (same as `--set seed=N`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Solve and write fields and traces.
    Solve,
    /// Solve and run the configured checks.
    Check,
    /// μ-invariance and local-window R sweeps.
    Sweep,
    /// Manufactured-solution convergence study.
    Mms,
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let mut settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    for pair in &cli.set {
        settings.set_pair(pair)?;
    }
    if let Some(seed) = cli.seed {
        settings.set("seed", seed.to_string());
    }
    let cfg = ExperimentConfig::from_settings(settings)?;
    let cmd = match cli.command {
        Sub::Solve => Command::Solve,
        Sub::Check => Command::Check,
        Sub::Sweep => Command::Sweep,
        Sub::Mms => Command::Mms,
    };
    let bundle = run_suite(cmd, &cfg, threads_from_env())?;
    emit_reports(&bundle, &cli.out).with_context(|| format!("writing {}", cli.out.display()))?;

    for note in &bundle.notes {
        eprintln!("note: {note}");
    }
    for r in bundle.reports.iter().filter(|r| !r.passed()) {
        eprintln!("{} {} {}: lhs {} rhs {}", r.outcome.as_str(), r.run_id, r.tag, r.lhs, r.rhs);
    }
    for s in bundle.solves.iter().filter(|s| !s.converged) {
        eprintln!("not converged: {}", s.label);
    }
    let passed = bundle.reports.iter().filter(|r| r.passed()).count();
    println!(
        "{} reports ({passed} pass), {} solves, written to {}",
        bundle.reports.len(),
        bundle.solves.len(),
        cli.out.display()
    );
    Ok(bundle.success())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
