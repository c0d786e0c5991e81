//! `drr`: render, register, gradcheck, synth-model and metrics front end.
//!
//! Exit codes: 0 ok, 1 usage, 2 scene or containment error, 3 no convergence, 4 numeric failure.

mod commands;
mod output;
mod scene;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drr_core::Error;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const USAGE: u8 = 1;
    pub const SCENE: u8 = 2;
    pub const NO_CONVERGENCE: u8 = 3;
    pub const NUMERIC: u8 = 4;

    pub fn usage(message: String) -> Self {
        Self { code: Self::USAGE, message }
    }

    pub fn scene(message: String) -> Self {
        Self { code: Self::SCENE, message }
    }

    pub fn numeric(message: String) -> Self {
        Self { code: Self::NUMERIC, message }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DimensionMismatch { .. } => Self::USAGE,
            Error::NonFiniteLoss { .. } | Error::UndefinedCorrelation(_) | Error::MissingForward(_) => Self::NUMERIC,
            _ => Self::SCENE,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "drr", version, about = "Differentiable mesh DRR rendering and 2D/3D shape-model registration")]
struct Cli {
    /// Worker threads for rendering and gradients (0 = one per core).
    #[arg(long, global = true, env = "DRR_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene to a transmission image plus per-object distance maps and masks.
    Render(commands::render::Args),
    /// Fit model pose and shape to a target image by minimizing -NGC.
    Register(commands::register::Args),
    /// Compare analytic gradients with central finite differences for one pipeline stage.
    Gradcheck(commands::gradcheck::Args),
    /// Write the synthetic two-partition ellipsoid model, optionally with a ready-to-run scene.
    SynthModel(commands::synth::Args),
    /// Hausdorff, landmark, pose and image-similarity metrics between two results.
    Metrics(commands::metrics::Args),
}

fn run(cli: Cli) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    let threads = rayon::current_num_threads();
    match cli.command {
        Command::Render(a) => commands::render::run(a, threads),
        Command::Register(a) => commands::register::run(a, threads),
        Command::Gradcheck(a) => commands::gradcheck::run(a, threads),
        Command::SynthModel(a) => commands::synth::run(a, threads),
        Command::Metrics(a) => commands::metrics::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(CliError::USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
