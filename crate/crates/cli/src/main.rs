//! `aitv`: phantom generation, degradation, segmentation, evaluation and
//! batch experiments.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 numerical failure.

mod degrade;
mod evaluate;
mod experiment;
mod io;
mod phantom;
mod pipeline;
mod segment;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "AITV_THREADS";

/// A bad flag or config value; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "aitv",
    version,
    about = "Poisson image segmentation with AITV regularization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a built-in test image and its ground-truth labels.
    Phantom(phantom::Args),
    /// Scale to a peak, blur, and add Poisson noise.
    Degrade(degrade::Args),
    /// Smooth and threshold an image (SaT for gray, SLaT for color).
    Segment(segment::Args),
    /// Score a label map against ground truth and a reconstruction against a reference.
    Evaluate(evaluate::Args),
    /// Run a batch of image × case × method × seed cells from a JSON config.
    Experiment(experiment::Args),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<aitv_core::Error>() {
            return match e {
                e if e.is_numerical() => 4,
                aitv_core::Error::Parameter { .. } => 2,
                _ => 3,
            };
        }
    }
    3
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| anyhow::anyhow!("thread pool: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Phantom(a) => phantom::run(a),
        Command::Degrade(a) => degrade::run(a),
        Command::Segment(a) => segment::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Experiment(a) => experiment::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
