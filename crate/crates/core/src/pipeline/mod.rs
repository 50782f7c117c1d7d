//! Daily orchestration and its file formats.

mod day;
pub mod harness;
mod hints;
mod report;

use std::fmt;

use thiserror::Error;

pub use day::{run_day, write_flights, DayConfig, DayInputs, DayOutput, FlightRecord};
pub use harness::{end_to_end_oracle_gap, simulate, HarnessConfig, OracleGap, Simulation};
pub use hints::{compile_with_hints, hinted_config, parse_hints, validate_hints, write_hints, HintEntry, HintError, HINTS_HEADER};
pub use report::{report_metrics, Aggregate, DayReport, Deltas, MetricReport, StageCounts};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    FeatureGeneration,
    Recommendation,
    Recompilation,
    Validation,
    HintGeneration,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::FeatureGeneration => "feature generation",
            Stage::Recommendation => "recommendation",
            Stage::Recompilation => "recompilation",
            Stage::Validation => "validation",
            Stage::HintGeneration => "hint generation",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        Self {
            stage,
            message: message.into(),
        }
    }
}
