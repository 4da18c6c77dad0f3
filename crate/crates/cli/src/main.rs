use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use eigenrate_core::fem::Family;
use eigenrate_core::studio::{run_config, ConfigFile, Overrides, RunOptions};

/// Run finite-element eigenvalue convergence studies.
#[derive(Debug, Parser)]
#[command(name = "eigenrate", version)]
struct Cli {
    /// Study section to run, or `all` for every study in the config.
    study: String,

    /// Config file (sections of `key = value` lines).
    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Keep only the first k mesh levels of each study.
    #[arg(long, value_name = "k")]
    levels: Option<usize>,

    /// Replace the element family of each selected study.
    #[arg(long, value_name = "name")]
    family: Option<Family>,

    /// Sequential reference mode (same as EIGENRATE_THREADS=0).
    #[arg(long)]
    seq: bool,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let file = ConfigFile::load(&cli.config)?;
    let mut opts = RunOptions::from_env()?;
    if cli.seq {
        opts = RunOptions::reference();
    }
    let names = if cli.study == "all" { Vec::new() } else { vec![cli.study.clone()] };
    let overrides = Overrides {
        levels: cli.levels,
        family: cli.family,
    };
    let dir = cli.out.clone().unwrap_or_else(|| file.output.dir.clone());
    let outcome = run_config(&file, &names, &overrides, &opts, &dir)
        .with_context(|| format!("running '{}' from {}", cli.study, cli.config.display()))?;
    for r in &outcome.reports {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {} ({})", r.study, r.kind);
        for g in &r.gates {
            let mark = match (g.passed, g.gating) {
                (true, _) => "ok",
                (false, true) => "FAILED",
                (false, false) => "failed (not gating)",
            };
            println!("  {:<18} {:<22} measured {}  expected {}", g.name, mark, fmt_measured(g.measured), g.expected);
        }
    }
    println!("outputs written to {}", dir.display());
    Ok(outcome.passed())
}

fn fmt_measured(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
