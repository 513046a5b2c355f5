//! End-to-end trajectory optimization pipeline driven by a JSON config.
//!
//! Every stage reads its inputs from the run directory and writes its
//! outputs plus a `stage.json` manifest, so stages can be rerun on their own.

pub mod config;
pub mod pipeline;

use std::fmt;

pub use config::Config;
pub use pipeline::{run_pipeline, Method, RunDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, clap::ValueEnum)]
pub enum Stage {
    Simulate,
    Metrics,
    Completeness,
    Optimize,
    Reconstruct,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Simulate,
        Stage::Metrics,
        Stage::Completeness,
        Stage::Optimize,
        Stage::Reconstruct,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Metrics => "metrics",
            Stage::Completeness => "completeness",
            Stage::Optimize => "optimize",
            Stage::Reconstruct => "reconstruct",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: ctraj_core::Error,
    },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            PipelineError::Config(_) => None,
        }
    }
}

/// Tags core errors with the stage they came from.
pub(crate) trait StageContext<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T> StageContext<T> for ctraj_core::Result<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError::Stage { stage, source })
    }
}
