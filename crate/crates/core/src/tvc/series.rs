use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TvcError;
use crate::elasticity::{fit_linear, loglog_pairs};
use crate::market::BookingRecord;

/// Observations of one period: log multipliers, log quantities and the
/// period's revenue per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvcPeriod {
    pub t: i64,
    pub design: Vec<f64>,
    pub response: Vec<f64>,
    pub rpd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvcSeries {
    pub periods: Vec<TvcPeriod>,
}

impl TvcSeries {
    pub fn new(periods: Vec<TvcPeriod>) -> Result<Self, TvcError> {
        let s = Self { periods };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), TvcError> {
        if self.periods.len() < 2 {
            return Err(TvcError::TooFewPeriods(self.periods.len()));
        }
        for (i, p) in self.periods.iter().enumerate() {
            if p.design.len() != p.response.len() {
                return Err(TvcError::LengthMismatch { period: i, design: p.design.len(), response: p.response.len() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    /// Checks that every multiplier (`exp(design)`) lies in `[low, high]`.
    pub fn multipliers_within(&self, low: f64, high: f64) -> bool {
        let tol = 1e-9;
        self.periods.iter().flat_map(|p| &p.design).all(|x| x.exp() >= low - tol && x.exp() <= high + tol)
    }
}

/// Independent log-log OLS per period; `None` where the period's design is degenerate.
pub fn per_period_slopes(series: &TvcSeries) -> Vec<Option<(f64, f64)>> {
    series.periods.iter().map(|p| fit_linear(&p.design, &p.response).ok().map(|r| (r.slope, r.slope_se))).collect()
}

/// Builds a period series from booking records: records are grouped into
/// periods of `period_days` booking days (starting at `first_day`), pooled
/// into multiplier bins, and log-transformed.
pub fn series_from_records(
    records: &[BookingRecord],
    first_day: i64,
    period_days: usize,
    bin_width: f64,
) -> Vec<TvcPeriod> {
    let mut grouped: BTreeMap<i64, Vec<&BookingRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.booking_day >= first_day) {
        grouped.entry((r.booking_day - first_day).div_euclid(period_days as i64)).or_default().push(r);
    }
    grouped
        .into_iter()
        .map(|(t, recs)| {
            let pairs = loglog_pairs(recs.iter().copied(), bin_width);
            let revenue: f64 = recs.iter().map(|r| r.revenue_per_day).sum();
            TvcPeriod {
                t,
                design: pairs.iter().map(|p| p.0.ln()).collect(),
                response: pairs.iter().map(|p| p.1.ln()).collect(),
                rpd: revenue / period_days as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn period(t: i64, xs: &[f64], slope: f64) -> TvcPeriod {
        TvcPeriod {
            t,
            design: xs.iter().map(|x| x.ln()).collect(),
            response: xs.iter().map(|x| 1.0 + slope * x.ln()).collect(),
            rpd: 100.0,
        }
    }

    #[test]
    fn identical_periods_identical_slopes() {
        let xs = [0.9, 0.95, 1.0, 1.1, 1.13];
        let s = TvcSeries::new(vec![period(0, &xs, -1.3), period(1, &xs, -1.3), period(2, &xs, -1.3)]).unwrap();
        let slopes = per_period_slopes(&s);
        assert!(slopes.iter().all(|v| *v == slopes[0]));
    }

    #[test]
    fn single_multiplier_period_is_absent() {
        let s = TvcSeries::new(vec![period(0, &[1.0, 1.0, 1.0], -1.0), period(1, &[0.9, 1.1], -1.0)]).unwrap();
        let slopes = per_period_slopes(&s);
        assert!(slopes[0].is_none());
        assert!(slopes[1].is_some());
    }

    #[test]
    fn noiseless_periods_give_exact_slopes() {
        let xs = [0.86, 0.97, 1.04, 1.12];
        let s = TvcSeries::new(vec![period(0, &xs, -1.0), period(1, &xs, -2.0)]).unwrap();
        let slopes = per_period_slopes(&s);
        assert!((slopes[0].unwrap().0 + 1.0).abs() < 1e-12);
        assert!((slopes[1].unwrap().0 + 2.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert_eq!(TvcSeries::new(vec![period(0, &[1.0], -1.0)]), Err(TvcError::TooFewPeriods(1)));
        let mut bad = period(1, &[0.9, 1.1], -1.0);
        bad.response.pop();
        assert!(matches!(
            TvcSeries::new(vec![period(0, &[0.9, 1.1], -1.0), bad]),
            Err(TvcError::LengthMismatch { period: 1, .. })
        ));
        let s = TvcSeries::new(vec![period(0, &[0.86, 1.14], -1.0), period(1, &[0.9, 1.1], -1.0)]).unwrap();
        assert!(s.multipliers_within(0.85, 1.15));
        assert!(!s.multipliers_within(0.9, 1.1));
    }
}
