//! Dynamic pricing toolkit for rental fleets.
//!
//! The crate is organised around the daily pricing loop:
//!
//! * [`market`] holds the booking lattice, heuristic baseline prices and a seeded
//!   market simulator that produces booking histories with known elasticities.
//! * [`elasticity`] estimates log-log price elasticities, checks the OLS
//!   assumptions and refines a hierarchical grouping tree.
//! * [`tvc`] tracks elasticity over time and forecasts it forward.
//! * [`demand`] forecasts per-cell demand at the baseline price with a pickup model.
//! * [`qp`] assembles and solves the margin-maximising quadratic program.
//! * [`analysis`] aggregates risk, opportunity costs and benchmarks policies.
//! * [`batch`] wires everything into the daily batch run and file exports.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops mirror the matrix algebra in the numeric kernels
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod batch;
pub mod demand;
pub mod elasticity;
pub mod fmt;
pub mod market;
pub mod qp;
pub mod stats;
pub mod tvc;
