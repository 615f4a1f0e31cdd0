use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use stefan_flame::config::{RunConfig, PRESETS};
use stefan_flame::simulation::run_simulation;
use stefan_flame::verify::{run_suite, SUITES};

/// Multicomponent reacting channel flow with Stefan-Maxwell diffusion.
#[derive(Debug, Parser)]
#[command(name = "stefan-flame", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation from a TOML config file or a preset name.
    Run {
        /// Path to a config file, or one of the preset names.
        config: String,
        /// Directory for snapshots and the time series.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Final time.
        #[arg(long)]
        t_end: Option<f64>,
        /// Largest time step.
        #[arg(long)]
        dt: Option<f64>,
        /// Print the resolved config and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Run a verification suite and print one line per check.
    Verify {
        /// Suite name, or "all".
        suite: String,
    },
    /// List presets and verification suites.
    List,
}

fn run(config: &str, output_dir: Option<PathBuf>, t_end: Option<f64>, dt: Option<f64>, print_config: bool) -> Result<bool> {
    let mut cfg = RunConfig::resolve(config).with_context(|| format!("loading {config}"))?;
    if let Some(d) = output_dir {
        cfg.output.directory = d;
    }
    if let Some(t) = t_end {
        cfg.numerics.t_end = t;
    }
    if let Some(dt) = dt {
        cfg.numerics.dt = dt;
    }
    if print_config {
        print!("{}", cfg.to_toml_string());
        return Ok(true);
    }
    let summary = run_simulation(&cfg)?;
    let last = summary.reports.last().expect("initial report");
    println!("steps {} time {:.6e}", summary.steps, summary.time);
    println!(
        "minY {:.3e} maxSumDeviation {:.3e} minTheta {:.3e} maxDivV {:.3e} gibbsEnergy {:.6e}",
        last.min_y, last.max_sum_deviation, last.min_theta, last.max_div_v, last.gibbs_energy
    );
    if let Some(ts) = &summary.time_series {
        println!("time series {}", ts.display());
    }
    println!("{} snapshots in {}", summary.snapshots.len(), cfg.output.directory.display());
    Ok(true)
}

fn verify(suite: &str) -> Result<bool> {
    let outcomes = run_suite(suite)?;
    let mut ok = true;
    for o in &outcomes {
        println!("{o}");
        ok &= o.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output_dir, t_end, dt, print_config } => run(&config, output_dir, t_end, dt, print_config),
        Command::Verify { suite } => verify(&suite),
        Command::List => {
            println!("presets: {}", PRESETS.join(", "));
            println!("suites: all, {}", SUITES.join(", "));
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
