//! The `hca-seqrec` command-line tool: ingest or synthesise a corpus, train a model,
//! evaluate it, sweep attention windows and print attention weights.

use std::fmt;

pub mod args;
pub mod checkpoint;
pub mod commands;
mod fsio;

pub use args::{Cli, Command};

/// A flag combination that makes no sense. Reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Sweep(a) => commands::sweep_cmd(a),
        Command::InspectAttention(a) => commands::inspect_cmd(a),
    }
}
