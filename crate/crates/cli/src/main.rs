//! `ictogen`: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 failed verification checks, 2 usage, 3 I/O,
//! 4 malformed input files, 5 numerical failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Key, RunConfig};
use crate::error::CliError;

/// Synthetic seizure EEG: surrogate data, GAN training, generation,
/// features and detector evaluation.
///
/// Every global flag can also be set through an environment variable with
/// the `ICTOGEN_` prefix (`ICTOGEN_SEED`, `ICTOGEN_OUT`, ...).
#[derive(Parser, Debug)]
#[command(name = "ictogen", version)]
struct Cli {
    /// Key=value configuration file.
    #[arg(long, global = true, env = "ICTOGEN_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, global = true, env = "ICTOGEN_SEED")]
    seed: Option<u64>,
    /// Worker threads across patients.
    #[arg(long, global = true, env = "ICTOGEN_JOBS")]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "ICTOGEN_OUT")]
    out: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded surrogate dataset.
    Surrogate,
    /// Convert a CSV recording (and interval sidecar) into a dataset file.
    Ingest,
    /// Train the GAN for one left-out target patient.
    TrainGan,
    /// Synthesize ictal windows from a checkpoint.
    Generate,
    /// Extract the feature matrix of a dataset or samples file.
    Features,
    /// Run both detector arms and write the report.
    Evaluate,
    /// Recompute the published aggregates from the bundled table.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Per-patient table to check instead of the bundled one.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Tolerance on both totals, in percentage points.
    #[arg(long)]
    tol_totals: Option<f64>,
    /// Tolerance on the total difference, in percentage points.
    #[arg(long)]
    tol_difference: Option<f64>,
    /// Tolerance on the p-value.
    #[arg(long)]
    tol_p: Option<f64>,
}

type Handler = fn(&RunConfig) -> Result<Vec<PathBuf>, CliError>;

fn dispatch(cli: &Cli) -> (&'static str, &'static [Key], Handler, Vec<String>) {
    use commands as c;
    match &cli.command {
        Command::Surrogate => ("surrogate", c::SURROGATE_KEYS, c::surrogate, Vec::new()),
        Command::Ingest => ("ingest", c::INGEST_KEYS, c::ingest, Vec::new()),
        Command::TrainGan => ("train-gan", c::TRAIN_KEYS, c::train_gan, Vec::new()),
        Command::Generate => ("generate", c::GENERATE_KEYS, c::generate, Vec::new()),
        Command::Features => ("features", c::FEATURES_KEYS, c::features, Vec::new()),
        Command::Evaluate => ("evaluate", c::EVALUATE_KEYS, c::evaluate, Vec::new()),
        Command::Verify(a) => {
            let mut extra = Vec::new();
            if let Some(t) = &a.table {
                extra.push(format!("table={}", t.display()));
            }
            for (k, v) in [
                ("tol_totals", a.tol_totals),
                ("tol_difference", a.tol_difference),
                ("tol_p", a.tol_p),
            ] {
                if let Some(v) = v {
                    extra.push(format!("{k}={v}"));
                }
            }
            ("verify", c::VERIFY_KEYS, c::verify, extra)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let (name, keys, handler, extra) = dispatch(cli);
    let overrides: Vec<String> = cli.set.iter().cloned().chain(extra).collect();
    let mut cfg = RunConfig::resolve(name, keys, cli.config.as_deref(), &overrides)?;
    if let Some(s) = cli.seed {
        cfg.set("seed", s);
    }
    if let Some(j) = cli.jobs {
        cfg.set("jobs", j);
    }
    if let Some(o) = &cli.out {
        cfg.set("out", o.display());
    }
    // Verification writes nothing, so it leaves no snapshot either.
    if name != "verify" {
        let snap = commands::write_snapshot(&cfg)?;
        log::info!("configuration snapshot {}", snap.display());
    }
    for path in handler(&cfg)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
