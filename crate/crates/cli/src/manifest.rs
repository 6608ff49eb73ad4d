use std::path::{Path, PathBuf};

use nrerank_core::datagen::SynthSpec;
use nrerank_core::io::Precision;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Effective parameters of a `rerank` run; feeding it back through
/// `rerank --manifest` reproduces the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankManifest {
    pub tool: String,
    pub version: String,
    pub query: PathBuf,
    pub gallery: PathBuf,
    pub output: PathBuf,
    pub precision: Precision,
    pub config: PipelineConfig,
}

/// Parameters of a `synth` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub tool: String,
    pub version: String,
    pub spec: SynthSpec,
    pub precision: Precision,
    pub files: Vec<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
