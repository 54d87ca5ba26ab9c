//! Price optimization as a concave quadratic program.
//!
//! [`assemble_qp`] builds the standard form from a [`PricingProblem`], [`solve`]
//! runs the sequential QP loop around an ADMM inner solver with an active-set
//! polish, and [`brute_force_oracle`] gives an independent lattice optimum.

mod admm;
pub mod assemble;
pub mod model;
pub mod oracle;
pub mod problem;
pub mod solve;

use thiserror::Error;

pub use admm::AdmmSettings;
pub use assemble::{assemble_at, assemble_qp, IneqRow, QpStandardForm, RowKind};
pub use model::{
    day_risk, demand_response, group_margin, normal_cdf_approx, normal_cdf_approx_inv, segment_totals, tail_risks,
    CostMode, Segment, SegmentTotals,
};
pub use oracle::brute_force_oracle;
pub use problem::{IndexSet, PricingProblem, RiskConfig, VarianceMode};
pub use solve::{solve, solve_with, PricingPolicy, SolveOptions, SolverReport, SolverStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("objective is not concave in cell {cell} (quadratic coefficient {coefficient})")]
    NonConcave { cell: usize, coefficient: f64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("search space too large: {work:.3e} evaluations exceeds {limit:.3e}")]
    SearchSpaceTooLarge { work: f64, limit: f64 },
}
