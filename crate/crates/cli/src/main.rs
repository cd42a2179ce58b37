//! `stpf`: generate data, train per-property models, predict and evaluate.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{EvaluateArgs, PredictArgs, SynthArgs, TrainArgs};
use stpf_core::Error;

#[derive(Parser)]
#[command(name = "stpf", version, about = "Spatio-temporal forecasting of masked property maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset, one FRMS file per property.
    Synth(SynthArgs),
    /// Train one model per property and write checkpoints and loss curves.
    Train(TrainArgs),
    /// Predict training frames or roll out a blind forecast from a checkpoint.
    Predict(PredictArgs),
    /// Compare predicted and true frames: metrics CSV, difference maps, summary.
    Evaluate(EvaluateArgs),
}

fn init_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("STPF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("STPF_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
