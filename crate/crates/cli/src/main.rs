//! `ctw`: correlation functions, HOM interferograms and coalescence time
//! windows of a two-level emitter under noisy resonant driving.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 numerical failure,
//! 3 refusal to run outside the validity regime.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand, ValueEnum};
use commands::{CliError, RunOptions, Target};
use ctw_core::figures::{Figure, ReproduceOptions};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "ctw", version, about = "Noisy resonant driving of a two-level emitter: g1, g2, HOM and CTW")]
struct Cli {
    /// Master seed for Monte Carlo runs (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run even when the regime report says the chosen method is invalid.
    #[arg(long, global = true)]
    override_regime: bool,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute one observable from a config file.
    Simulate {
        config: PathBuf,
        #[arg(value_enum)]
        target: Target,
    },
    /// Regenerate the data behind a figure from its caption parameters.
    Reproduce {
        /// fig2, fig3, fig4, fig6, fig7 or fig8.
        figure: String,
        /// Add Monte Carlo estimates to fig2/fig4.
        #[arg(long, default_value_t = 0)]
        mc_trajectories: usize,
        #[arg(long, default_value_t = 12)]
        quadrature_order: usize,
        /// Delay step of one-sided correlation plots (ns).
        #[arg(long, default_value_t = 0.2)]
        step_ns: f64,
    },
    /// Print the regime report for a config.
    Regimes { config: PathBuf },
    /// Check every file digest recorded in a run manifest.
    Verify { dir: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config::ConfigError("--threads must be at least 1".into()).into());
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    let Format::Csv = cli.format;
    let opts = RunOptions { seed: cli.seed, override_regime: cli.override_regime, out_dir: cli.out_dir };
    match cli.command {
        Command::Simulate { config, target } => {
            let m = commands::simulate(&config, target, &opts)?;
            println!("{} files written to {}", m.outputs.len(), opts.out_dir.display());
        }
        Command::Reproduce { figure, mc_trajectories, quadrature_order, step_ns } => {
            let figure: Figure = figure.parse().map_err(|e: ctw_core::Error| config::ConfigError(e.to_string()))?;
            if !(step_ns > 0.0) || quadrature_order < 2 {
                return Err(config::ConfigError("--step-ns must be positive and --quadrature-order >= 2".into()).into());
            }
            let ro = ReproduceOptions {
                order: quadrature_order,
                mc_trajectories,
                seed: opts.seed.unwrap_or(config::DEFAULT_SEED),
                step: step_ns,
            };
            let m = commands::reproduce_figure(figure, &ro, &opts)?;
            println!("{} files written to {}", m.outputs.len(), opts.out_dir.join(figure.name()).display());
        }
        Command::Regimes { config } => print!("{}", commands::regimes(&config)?),
        Command::Verify { dir } => {
            let bad = manifest::RunManifest::read(&dir)?.verify(&dir)?;
            if !bad.is_empty() {
                return Err(config::ConfigError(format!("digest mismatch: {}", bad.join(", "))).into());
            }
            println!("all digests match");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
