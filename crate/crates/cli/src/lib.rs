//! Command-line workflows: synthetic data, training, evaluation, prediction,
//! attention inspection and the reordering experiment.

pub mod args;
pub mod commands;
pub mod workflow;

use anyhow::Result;

use args::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynthetic(a) => commands::gen_synthetic(a).map(drop),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a).map(drop),
        Command::Predict(a) => commands::predict(a).map(drop),
        Command::InspectAttention(a) => commands::inspect_attention(a).map(drop),
        Command::ShuffleExperiment(a) => commands::shuffle_experiment(a).map(drop),
        Command::Sweep(a) => commands::sweep(a).map(drop),
        Command::CountParams(a) => commands::count(a).map(drop),
    }
}
