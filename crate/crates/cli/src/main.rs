mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "urnflow",
    version,
    about = "Simulate N-urn linear systems and check their limit theory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration field, e.g. `--set n_list=32,64` or `--set model.phi=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to all cores.
    #[arg(long, env = "URNFLOW_THREADS", global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Omit the timestamp line from CSV output.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Trajectories and observables of the urn process.
    Simulate,
    /// Density and second-moment density, kernels and limit variances.
    Hydro,
    /// Exact moment evolution and covariance decay.
    Moments,
    /// Ensemble laws of large numbers and fluctuation variances.
    Fluct,
    /// The acceptance suite.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    cfg.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| ConfigError(format!("thread pool: {e}")))?;
    }
    let ctx = commands::Context::new(cfg, cli.deterministic)?;
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Hydro => commands::hydro(&ctx),
        Command::Moments => commands::moments(&ctx),
        Command::Fluct => commands::fluct(&ctx),
        Command::Verify => return commands::verify(&ctx),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use urnflow::Error;
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(
            Error::Parse { .. }
            | Error::InvalidModel(_)
            | Error::UnknownPreset(_)
            | Error::InvalidArgument(_)
            | Error::Json(_),
        ) => 2,
        Some(
            Error::Numerical(_)
            | Error::Consistency(_)
            | Error::GridMismatch { .. }
            | Error::IndexOutOfRange { .. },
        ) => 3,
        _ => 1,
    }
}
