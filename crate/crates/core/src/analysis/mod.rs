//! Decision risk, opportunity costs, Monte Carlo validation and policy benchmarks.

mod benchmark;
mod fleet;
mod montecarlo;

pub use benchmark::{benchmark, BenchmarkRow, BenchmarkTable};
pub use fleet::{fleet_opportunity_cost, FleetCounterfactual};
pub use montecarlo::{monte_carlo_eval, MonteCarloReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qp::QpError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRisk {
    pub sigma_bf: f64,
    pub sigma_e: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAggregate {
    pub per_decision: Vec<DecisionRisk>,
    pub total: f64,
}

/// How the two sd columns are put on a common scale before aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskScale {
    /// Raw units: reservations and elasticity.
    #[default]
    Raw,
    /// Each column divided by its root mean square.
    Normalized,
}

pub fn aggregate_risk(decisions: &[(f64, f64)]) -> Result<RiskAggregate, AnalysisError> {
    aggregate_risk_scaled(decisions, RiskScale::Raw)
}

/// Sum over decisions of `sqrt(sigma_bf^2 + sigma_e^2)`.
pub fn aggregate_risk_scaled(decisions: &[(f64, f64)], scale: RiskScale) -> Result<RiskAggregate, AnalysisError> {
    if decisions.iter().any(|(a, b)| !(*a >= 0.0 && *b >= 0.0) || !a.is_finite() || !b.is_finite()) {
        return Err(AnalysisError::InvalidInput("risk sds must be finite and non-negative".into()));
    }
    let (fa, fb) = match scale {
        RiskScale::Raw => (1.0, 1.0),
        RiskScale::Normalized => {
            let rms = |f: fn(&(f64, f64)) -> f64| {
                let n = decisions.len().max(1) as f64;
                let r = (decisions.iter().map(|d| f(d).powi(2)).sum::<f64>() / n).sqrt();
                if r > 0.0 {
                    1.0 / r
                } else {
                    1.0
                }
            };
            (rms(|d| d.0), rms(|d| d.1))
        }
    };
    let per_decision: Vec<DecisionRisk> = decisions
        .iter()
        .map(|&(a, b)| DecisionRisk { sigma_bf: a, sigma_e: b, contribution: (a * fa).hypot(b * fb) })
        .collect();
    let total = per_decision.iter().map(|d| d.contribution).sum();
    Ok(RiskAggregate { per_decision, total })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceSet {
    pub choices: Vec<(String, f64)>,
}

/// `max value - value` per choice; every maximizer maps to exactly 0.
pub fn opportunity_cost(choices: &ChoiceSet) -> Result<Vec<f64>, AnalysisError> {
    if choices.choices.is_empty() {
        return Err(AnalysisError::InvalidInput("choice set is empty".into()));
    }
    let best = choices.choices.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(choices.choices.iter().map(|c| best - c.1).collect())
}
