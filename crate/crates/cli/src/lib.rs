//! Command line front end: synthesize data, re-rank, evaluate, sweep and
//! compare configurations.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use config::{PipelineConfig, Preset};
pub use error::{CliError, CliResult};

use args::Command;

pub fn run(command: &Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => commands::synth(a),
        Command::Rerank(a) => commands::rerank_cmd(a),
        Command::Eval(a) => commands::eval_cmd(a),
        Command::Sweep(a) => commands::sweep_cmd(a),
        Command::Pipeline(a) => commands::pipeline_cmd(a),
        Command::Distances(a) => commands::distances_cmd(a),
    }
}
