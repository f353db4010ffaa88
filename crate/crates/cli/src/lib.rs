//! Command-line pipeline: bundle conversion and validation, plan generation,
//! evaluation, comparison and batch runs.

pub mod commands;
pub mod config;
pub mod output;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT_ERROR: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;

/// Result of a command that did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Artifacts were written but the solver hit its iteration budget.
    NotConverged,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => EXIT_OK,
            Outcome::NotConverged => EXIT_NOT_CONVERGED,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "quadlin", version, about = "Prediction-guided IMRT fluence planning and plan evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an OpenKBP-style patient folder into a bundle.
    Convert(commands::convert::ConvertArgs),
    /// Check a bundle and print its summary or every problem found.
    Validate(commands::validate::ValidateArgs),
    /// Generate a plan from a bundle and one of its predictions.
    Solve(commands::solve::SolveArgs),
    /// Compute DVH points and clinical criteria for a dose.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Compare DVH points and criteria of several doses against the first.
    Compare(commands::compare::CompareArgs),
    /// Solve and evaluate every (patient, prediction) cell of a manifest.
    Batch(commands::batch::BatchArgs),
    /// Write a synthetic bundle.
    Synth(commands::synth::SynthArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Convert(a) => commands::convert::run(&a),
        Command::Validate(a) => commands::validate::run(&a),
        Command::Solve(a) => commands::solve::run(&a),
        Command::Evaluate(a) => commands::evaluate::run(&a),
        Command::Compare(a) => commands::compare::run(&a),
        Command::Batch(a) => commands::batch::run(&a),
        Command::Synth(a) => commands::synth::run(&a),
    }
}
