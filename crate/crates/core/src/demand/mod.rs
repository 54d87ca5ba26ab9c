//! Baseline-price demand forecasting with pickup (booking-curve) models.
//!
//! Curves accumulate offers per `(pickup_day, lor)` from the earliest advance
//! booking time down to zero. Offers are price-independent, so forecasting them
//! and converting through the baseline conversion rate yields demand at the
//! baseline price even when the history contains randomized prices.

mod pickup;

pub use pickup::{fit_forecaster, Forecaster, ForecasterKind, ForecasterSpec};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{BookingRecord, GridDims};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemandError {
    #[error("insufficient history: {have} complete pickup dates, {need} needed")]
    InsufficientHistory { have: usize, need: usize },
    #[error("pickup day {0} is outside the forecast window")]
    UnknownPickupDate(i64),
    #[error("curve for pickup day {pickup_day} has {len} points, more than {max_abt} booking days")]
    CurveTooLong { pickup_day: i64, len: usize, max_abt: usize },
    #[error("grid needs {needed} advance booking days but the forecaster learned {learned}")]
    DimensionMismatch { needed: usize, learned: usize },
    #[error("invalid forecaster spec: {0}")]
    InvalidSpec(String),
}

/// Cumulative offers of one `(pickup_day, lor)` pair. `cumulative[n]` is the
/// running total after the booking day at advance booking time `max_abt - 1 - n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookingCurve {
    pub pickup_day: i64,
    pub lor: u32,
    pub cumulative: Vec<f64>,
}

impl BookingCurve {
    pub fn is_non_decreasing(&self) -> bool {
        self.cumulative.windows(2).all(|w| w[1] >= w[0])
    }

    /// Per-booking-day increments in the same order as `cumulative`.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|c| {
                let d = c - prev;
                prev = *c;
                d
            })
            .collect()
    }
}

/// Builds curves for pickup days `as_of .. as_of + n_days` from the offers booked
/// strictly before `as_of`. Every `(pickup_day, lor)` pair gets a curve, possibly
/// empty.
pub fn open_curves(records: &[BookingRecord], as_of: i64, dims: GridDims) -> Vec<BookingCurve> {
    let m = dims.max_abt as i64;
    let mut offers: BTreeMap<(i64, u32, i64), f64> = BTreeMap::new();
    for r in records {
        if r.booking_day < as_of && r.abt() >= 0 && r.abt() < m {
            *offers.entry((r.pickup_day, r.lor, r.abt())).or_default() += f64::from(r.offers);
        }
    }
    let mut out = Vec::with_capacity(dims.n_pickup_days * dims.max_lor);
    for i in 0..dims.n_pickup_days as i64 {
        let p = as_of + i;
        for lor in 1..=dims.max_lor as u32 {
            // booking days p - abt < as_of  <=>  abt > i
            let mut total = 0.0;
            let cumulative = (i + 1..m)
                .rev()
                .map(|abt| {
                    total += offers.get(&(p, lor, abt)).copied().unwrap_or(0.0);
                    total
                })
                .collect();
            out.push(BookingCurve { pickup_day: p, lor, cumulative });
        }
    }
    out
}

/// Per-cell baseline-price reservations with their uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandForecast {
    pub dims: GridDims,
    /// Pickup day of lattice row 0.
    pub as_of: i64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl DemandForecast {
    /// A forecast from given per-cell means and sds.
    pub fn new(dims: GridDims, as_of: i64, mean: Vec<f64>, sd: Vec<f64>) -> Self {
        assert_eq!(mean.len(), dims.n_cells());
        assert_eq!(sd.len(), dims.n_cells());
        Self { dims, as_of, mean, sd }
    }

    pub fn total(&self) -> f64 {
        self.mean.iter().sum()
    }

    pub fn is_valid(&self) -> bool {
        self.mean.len() == self.dims.n_cells()
            && self.sd.len() == self.dims.n_cells()
            && self.mean.iter().chain(&self.sd).all(|v| v.is_finite() && *v >= 0.0)
    }

    /// CSV with header `pickup_day,abt,lor,mean,sd`.
    pub fn to_csv(&self) -> String {
        use crate::fmt::fixed6;
        let mut s = String::from("pickup_day,abt,lor,mean,sd\n");
        for (idx, c) in self.dims.cells().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.as_of + c.day as i64,
                c.abt,
                c.lor,
                fixed6(self.mean[idx]),
                fixed6(self.sd[idx])
            ));
        }
        s
    }
}

/// `offers * base_cvr * (1 - elasticity * (1 - multiplier))`, floored at 0.
pub fn expected_reservations(offers: f64, base_cvr: f64, elasticity: f64, multiplier: f64) -> f64 {
    (offers * base_cvr * (1.0 - elasticity * (1.0 - multiplier))).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn expected_reservations_examples() {
        assert!((expected_reservations(1000.0, 0.10, -1.5, 1.00) - 100.0).abs() < 1e-12);
        assert!((expected_reservations(1000.0, 0.10, -1.5, 1.01) - 98.5).abs() < 1e-9);
        assert!((expected_reservations(1000.0, 0.10, 0.0, 1.10) - 100.0).abs() < 1e-12);
        assert_eq!(expected_reservations(1000.0, 0.10, -1.5, 2.0), 0.0);
    }

    proptest! {
        #[test]
        fn expected_reservations_linear(o in 0.0..1e4f64, cvr in 0.01..1.0f64, e in -3.0..0.0f64, m in 0.8..1.2f64) {
            let v = expected_reservations(o, cvr, e, m);
            prop_assert!(v >= 0.0);
            let doubled = expected_reservations(2.0 * o, cvr, e, m);
            prop_assert!((doubled - 2.0 * v).abs() <= 1e-9 * (1.0 + v));
            // affine in (1 - m)
            let mid = expected_reservations(o, cvr, e, 0.5 * (m + 1.0));
            let one = expected_reservations(o, cvr, e, 1.0);
            prop_assert!((mid - 0.5 * (v + one)).abs() <= 1e-9 * (1.0 + v));
        }
    }

    #[test]
    fn open_curves_cover_window() {
        let grid = crate::market::grid::tests::small_grid();
        let rand = crate::market::RandomizationConfig { noise_sd: 0.0, ..Default::default() };
        let hist = crate::market::generate_history(&grid, &rand, 10).unwrap();
        let curves = open_curves(&hist, 5, grid.dims);
        assert_eq!(curves.len(), 3 * 2);
        // pickup 5 (row 0): abt 1 observed; pickup 6 (row 1): nothing
        assert_eq!(curves[0].cumulative, vec![40.0]);
        assert!(curves[2].cumulative.is_empty());
        assert!(curves.iter().all(BookingCurve::is_non_decreasing));
    }
}
