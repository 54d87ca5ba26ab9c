//! Log-log elasticity estimation, OLS assumption checks and the hierarchical
//! grouping tree with global-elasticity fallback.

mod diagnostics;
mod grouping;
mod ols;

pub use diagnostics::{diagnose, diagnose_with, DiagnosticsReport, DEFAULT_SIGNIFICANCE};
pub use grouping::{
    global_node, grouping_uncertainty, loglog_pairs, refine_grouping, score_grouping, ElasticityEstimate, Feature,
    GroupingConfig, GroupingNode, PathStep,
};
pub use ols::{fit_linear, fit_loglog, RegressionResult};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OlsError {
    #[error("design has fewer than two distinct values")]
    DegenerateDesign,
    #[error("non-positive value at input {index}; log-log fits need positive data")]
    NonPositiveData { index: usize },
    #[error("{n} observations, at least {min} needed")]
    TooFewObservations { n: usize, min: usize },
    #[error("design has {design} values but response has {response}")]
    LengthMismatch { design: usize, response: usize },
}
