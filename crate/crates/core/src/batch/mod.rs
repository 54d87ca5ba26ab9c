//! Daily batch run: configuration, the plan-solve-simulate loop and file exports.

mod config;
mod export;
mod run;

pub use config::{BatchConfig, ElasticityConfig, OptimizerConfig, RunConfig, ScenarioConfig};
pub use export::{ingest, write_outputs, OUTPUT_FILES};
pub use run::{plan_day, realized_margin, run_batch, BatchState, DayOutcome, DayPlan};

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::market::io::RecordsError;
use crate::market::MarketError;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("day {day}: {message}")]
    Day { day: i64, message: String },
    #[error(transparent)]
    Records(#[from] RecordsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BatchError {
    /// Configuration problems are the caller's to fix; everything else is data or runtime.
    pub fn is_config(&self) -> bool {
        matches!(self, BatchError::Config { .. })
    }
}
