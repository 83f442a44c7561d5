//! Command-line driver for the `mlreg` classifiers: training, tuning,
//! prediction, evaluation, ablation and model-size reports.

pub mod ablate;
pub mod args;
pub mod commands;
pub mod config;
pub mod engine;
pub mod error;
pub mod output;

pub use config::{Classifier, RunConfig};
pub use error::{CliError, Result};

use args::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => commands::cmd_train(a).map(|_| ()),
        Command::Tune(a) => commands::cmd_tune(a).map(|_| ()),
        Command::Predict(a) => commands::cmd_predict(a).map(|_| ()),
        Command::Eval(a) => commands::cmd_eval(a).map(|_| ()),
        Command::Ablate(a) => commands::cmd_ablate(a).map(|_| ()),
        Command::ModelSize(a) => commands::cmd_model_size(a).map(|_| ()),
        Command::GenSynthetic(a) => commands::cmd_gen_synthetic(a),
    }
}
