//! Booking lattice, heuristic baseline prices and the seeded market simulator.

pub(crate) mod grid;
pub mod io;
mod rules;
mod simulate;

pub use grid::{Cell, GridDims, MarketGrid};
pub use rules::{baseline_price, Covariates, HeuristicRuleSet, PriceRule, RulePredicate};
pub(crate) use simulate::derive_seed;
pub use simulate::{generate_day, generate_history, on_rents, BookingRecord, PricingMode, RandomizationConfig};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("grid dimensions must be strictly positive (got N={n}, M={m}, L={l})")]
    InvalidDims { n: usize, m: usize, l: usize },
    #[error("invalid market grid: {0}")]
    InvalidGrid(String),
    #[error("invalid rule set: {0}")]
    InvalidRules(String),
    #[error("no heuristic rule matches the covariates")]
    NoMatchingRule,
    #[error("horizon {horizon} is shorter than the maximum advance booking time {max_abt}")]
    InvalidHorizon { horizon: usize, max_abt: usize },
    #[error("invalid randomization config: {0}")]
    InvalidRandomization(String),
}
