//! Command-line front end: configuration-driven experiments over the
//! finite-width simulation and infinite-width prediction machinery.
//!
//! One binary, five subcommands:
//!
//! * `predict` — compute the limit laws a configured network converges to;
//! * `verify` — simulate finite widths and gate them against the prediction;
//! * `counterexample` — demonstrate the ReLU/Pareto divergence;
//! * `sweep` — run a verify block per (α, activation) grid point;
//! * `selftest` — quick built-in checks, no configuration needed.
//!
//! Exit codes: 0 pass, 1 tolerance failure, 2 configuration error,
//! 3 numeric error. Identical config file and seed produce byte-identical
//! output files: reports embed the config hash, tool versions, and seed,
//! and never a timestamp.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};
use stable_width_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "stable-width",
    version,
    about = "Wide neural networks with heavy-tailed weights: predict the \
             infinite-width stable limit laws, verify them against finite-width \
             simulation, and probe where convergence fails.",
    propagate_version = true
)]
struct Cli {
    /// Experiment configuration file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Root seed; overrides the seed in the config file.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads (fallback: STABLE_WIDTH_THREADS, then all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Output directory for report files (overrides `out` in the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the predicted infinite-width limit laws and write them as JSON.
    Predict,
    /// Simulate finite widths and gate the empirical laws against the prediction.
    Verify,
    /// Run the divergence experiment: ReLU with Pareto weights has no limit.
    Counterexample,
    /// Run one verify block per (alpha, activation) grid point and concatenate reports.
    Sweep,
    /// Run the built-in quick checks; no configuration file needed.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(commands::Gate::Pass) => ExitCode::SUCCESS,
        Ok(commands::Gate::Fail(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{e}");
            let code = match e {
                Error::Config(_) => 2,
                Error::Numeric(_) => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> stable_width_core::Result<commands::Gate> {
    setup_threads(cli.threads)?;

    if matches!(cli.command, Command::Selftest) {
        return commands::selftest();
    }

    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::config("this command needs --config PATH (a JSON experiment file)"))?;
    let raw = std::fs::read(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    let config_sha256 = hex_sha256(&raw);
    let text =
        String::from_utf8(raw).map_err(|_| Error::config("config file is not valid UTF-8"))?;
    let mut cfg = config::ExperimentConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = commands::Context {
        cfg,
        config_sha256,
        out_dir,
    };

    match cli.command {
        Command::Predict => commands::predict(&ctx),
        Command::Verify => commands::verify(&ctx),
        Command::Counterexample => commands::counterexample(&ctx),
        Command::Sweep => commands::sweep(&ctx),
        Command::Selftest => unreachable!("selftest handled before config loading"),
    }
}

/// Size the global worker pool: `--threads`, else `STABLE_WIDTH_THREADS`,
/// else leave the library default (all cores). Results do not depend on the
/// thread count — parallel reductions use fixed association — so this is
/// purely a resource knob.
fn setup_threads(flag: Option<usize>) -> stable_width_core::Result<()> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var("STABLE_WIDTH_THREADS") {
            Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| {
                Error::config(format!(
                    "STABLE_WIDTH_THREADS must be a positive integer, got {s:?}"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = requested {
        if n == 0 {
            return Err(Error::config("thread count must be ≥ 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn hex_sha256(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        let _ = write!(out, "{b:02x}");
    }
    out
}
