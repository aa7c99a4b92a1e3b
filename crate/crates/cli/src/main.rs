use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use headlab::scenarios::threads_from_env;
use headlab::settings::parse_seeds;
use headlab::{emit_plots, run_scenario, CliError, ScenarioConfig, ScenarioKind};

/// Run a projection-head geometry scenario.
#[derive(Parser, Debug)]
#[command(name = "headlab", version)]
struct Args {
    scenario: ScenarioKind,
    /// TOML file with a [scenario] table of overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds; overrides the config file.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
}

fn run(args: Args) -> Result<i32, CliError> {
    let mut cfg = match &args.config {
        Some(p) => ScenarioConfig::load(args.scenario, p)?,
        None => ScenarioConfig::new(args.scenario, format!("runs/{}", args.scenario)),
    };
    if let Some(s) = &args.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(o) = args.out {
        cfg.output_dir = o;
    }
    let threads = threads_from_env()?;
    let mut bundle = run_scenario(&cfg, threads)?;
    for f in &bundle.failures {
        eprintln!("seed {} of {} failed: {}", f.seed, f.cell, f.error);
    }
    if args.plots {
        let written = emit_plots(&mut bundle)?;
        eprintln!("wrote {} plots", written.len());
    }
    for (name, a) in &bundle.aggregates {
        println!("{name}: {:.6e} ± {:.3e}", a.mean, a.std);
    }
    for (name, ok) in &bundle.checks {
        println!("check {name}: {}", if *ok { "yes" } else { "no" });
    }
    println!("report: {}", cfg.output_dir.join(headlab::output::REPORT_FILE).display());
    Ok(bundle.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match run(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
