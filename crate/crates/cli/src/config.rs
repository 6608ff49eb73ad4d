use clap::ValueEnum;
use nrerank_core::{AroConfig, DmonConfig, Error, Result};
use serde::{Deserialize, Serialize};

/// Published per-dataset settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Market1501,
    Dukemtmc,
    Msmt17,
}

impl Preset {
    pub fn config(self) -> PipelineConfig {
        let (k1, k2, batch_size) = match self {
            Preset::Market1501 => (2, 20, None),
            Preset::Dukemtmc => (5, 20, None),
            Preset::Msmt17 => (5, 2, Some(10_000)),
        };
        PipelineConfig {
            dmon: DmonConfig {
                k1,
                orders: 3,
                gamma: 0.75,
                batch_size,
                ..DmonConfig::default()
            },
            aro: AroConfig {
                k2,
                ..AroConfig::default()
            },
            ..PipelineConfig::default()
        }
    }
}

/// Everything that determines a re-ranking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub dmon: DmonConfig,
    pub aro: AroConfig,
    pub dmon_on: bool,
    pub aro_on: bool,
    /// Build the ARO similarity from enhanced rather than raw features.
    pub aro_uses_enhanced: bool,
    /// Enhance query and gallery as one set instead of separately.
    pub joint: bool,
    pub max_rank: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dmon: DmonConfig::default(),
            aro: AroConfig::default(),
            dmon_on: true,
            aro_on: true,
            aro_uses_enhanced: true,
            joint: false,
            max_rank: 50,
        }
    }
}

impl PipelineConfig {
    pub fn baseline() -> Self {
        Self {
            dmon_on: false,
            aro_on: false,
            ..Self::default()
        }
    }

    pub fn is_baseline(&self) -> bool {
        !self.dmon_on && !self.aro_on
    }

    pub fn with_stages(&self, dmon_on: bool, aro_on: bool) -> Self {
        Self {
            dmon_on,
            aro_on,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dmon_on {
            self.dmon.validate()?;
        }
        if self.aro_on {
            self.aro.validate()?;
        }
        if self.max_rank == 0 {
            return Err(Error::InvalidConfig("max rank must be at least 1".into()));
        }
        Ok(())
    }
}
