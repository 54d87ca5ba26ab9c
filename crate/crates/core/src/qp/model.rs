//! Closed-form pieces of the pricing model: demand response, margins,
//! segment totals, utilization and its variance, and the tail-risk measure.

use serde::{Deserialize, Serialize};

/// Demand after applying `multiplier` under the linear elasticity model,
/// floored at zero. The flag is set when the floor was hit.
pub fn demand_response(base_demand: f64, elasticity: f64, multiplier: f64) -> (f64, bool) {
    let d = base_demand * (1.0 - elasticity * (1.0 - multiplier));
    if d < 0.0 {
        (0.0, true)
    } else {
        (d, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// A constant cost per cell, independent of the multiplier.
    Fixed,
    /// Cost charged on every realized booking.
    #[default]
    PerBooking,
}

/// Margin of one demand slice. `cost` is the cell constant in fixed mode and
/// the cost per booking otherwise.
pub fn group_margin(base_demand: f64, price: f64, cost: f64, elasticity: f64, multiplier: f64, mode: CostMode) -> f64 {
    let (d, _) = demand_response(base_demand, elasticity, multiplier);
    match mode {
        CostMode::Fixed => d * price * multiplier - cost,
        CostMode::PerBooking => d * (price * multiplier - cost),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub bookings: f64,
    pub elasticity: f64,
    /// Relative price change, e.g. `-0.1` for a 10% discount.
    pub pct_change: f64,
    pub new_price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentTotals {
    pub total_demand: f64,
    pub revenue: f64,
    pub cost: f64,
    pub margin: f64,
}

/// Aggregates segment demand `B (1 + E dP)`, revenue, per-booking cost and margin.
pub fn segment_totals(segments: &[Segment], cost_per_booking: f64) -> SegmentTotals {
    let mut total_demand = 0.0;
    let mut revenue = 0.0;
    for s in segments {
        let d = s.bookings * (1.0 + s.elasticity * s.pct_change);
        total_demand += d;
        revenue += s.new_price * d;
    }
    let cost = total_demand * cost_per_booking;
    SegmentTotals { total_demand, revenue, cost, margin: revenue - cost }
}

const CDF_A: f64 = 0.07056;
const CDF_B: f64 = 1.5976;

/// Logistic approximation of the standard normal CDF; absolute error below 1.5e-4.
pub fn normal_cdf_approx(z: f64) -> f64 {
    1.0 / (1.0 + (-(CDF_A * z * z * z + CDF_B * z)).exp())
}

/// Inverse of [`normal_cdf_approx`] for `p` in `(0, 1)`.
pub fn normal_cdf_approx_inv(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
    // a z^3 + b z = logit(p): one real root since a, b > 0
    let q = -(p / (1.0 - p)).ln() / CDF_A;
    let pp = CDF_B / CDF_A;
    let disc = (q * q / 4.0 + pp * pp * pp / 27.0).sqrt();
    let mut z = (-q / 2.0 + disc).cbrt() + (-q / 2.0 - disc).cbrt();
    // one Newton step removes cancellation error
    let target = -q * CDF_A;
    let f = CDF_A * z * z * z + CDF_B * z - target;
    z -= f / (3.0 * CDF_A * z * z + CDF_B);
    z
}

/// Probability that utilization leaves `[c, 100]`, using the approximate CDF.
/// A zero sd gives the indicator form.
pub fn day_risk(u_mean: f64, u_sd: f64, c: f64) -> f64 {
    let (lower, upper) = tail_risks(u_mean, u_sd, c);
    (lower + upper).clamp(0.0, 1.0)
}

/// Lower (`u < c`) and upper (`u > 100`) tail probabilities separately.
pub fn tail_risks(u_mean: f64, u_sd: f64, c: f64) -> (f64, f64) {
    if u_sd == 0.0 {
        let lower = if u_mean < c { 1.0 } else { 0.0 };
        let upper = if u_mean > 100.0 { 1.0 } else { 0.0 };
        return (lower, upper);
    }
    (normal_cdf_approx((c - u_mean) / u_sd), 1.0 - normal_cdf_approx((100.0 - u_mean) / u_sd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn phi(z: f64) -> f64 {
        Normal::new(0.0, 1.0).unwrap().cdf(z)
    }

    #[test]
    fn demand_response_examples() {
        assert_eq!(demand_response(100.0, -1.5, 1.0), (100.0, false));
        assert!((demand_response(100.0, -2.0, 0.9).0 - 120.0).abs() < 1e-12);
        assert!((demand_response(100.0, -2.0, 1.1).0 - 80.0).abs() < 1e-12);
        assert_eq!(demand_response(100.0, -20.0, 1.1), (0.0, true));
    }

    #[test]
    fn group_margin_examples() {
        assert!((group_margin(100.0, 50.0, 1000.0, -2.0, 0.9, CostMode::Fixed) - 4400.0).abs() < 1e-9);
        assert!((group_margin(100.0, 50.0, 1000.0, -2.0, 1.0, CostMode::Fixed) - 4000.0).abs() < 1e-9);
        assert!((group_margin(100.0, 50.0, 10.0, -2.0, 0.9, CostMode::PerBooking) - 4200.0).abs() < 1e-9);
    }

    #[test]
    fn segment_examples() {
        let seg = |b, e, d, p| Segment { bookings: b, elasticity: e, pct_change: d, new_price: p };
        let zero = [seg(100.0, -1.0, 0.0, 1.0), seg(50.0, -2.0, 0.0, 1.0), seg(20.0, -3.0, 0.0, 1.0)];
        assert_eq!(segment_totals(&zero, 0.0).total_demand, 170.0);
        let s = [seg(100.0, -1.5, -0.1, 100.0), seg(50.0, -1.0, 0.0, 80.0), seg(20.0, -0.5, 0.1, 60.0)];
        let t = segment_totals(&s, 20.0);
        assert!((t.total_demand - 184.0).abs() < 1e-9);
        assert!((t.revenue - 16640.0).abs() < 1e-9);
        assert!((t.cost - 3680.0).abs() < 1e-9);
        assert!((t.margin - 12960.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn segment_convention_matches_demand_response(b in 0.0..1e3f64, e in -3.0..0.0f64, d in -0.2..0.2f64) {
            let seg = Segment { bookings: b, elasticity: e, pct_change: d, new_price: 1.0 };
            let lhs = segment_totals(&[seg], 0.0).total_demand;
            let rhs = b * (1.0 - e * (1.0 - (1.0 + d)));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn cdf_symmetry(z in -8.0..8.0f64) {
            prop_assert!((normal_cdf_approx(-z) - (1.0 - normal_cdf_approx(z))).abs() < 1e-15);
        }

        #[test]
        fn inverse_roundtrip(p in 1e-6..(1.0 - 1e-6)) {
            let z = normal_cdf_approx_inv(p);
            prop_assert!((normal_cdf_approx(z) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_accuracy() {
        assert_eq!(normal_cdf_approx(0.0), 0.5);
        assert!((normal_cdf_approx(1.96) - 0.975).abs() < 1e-3);
        let worst = (-6000..=6000)
            .map(|i| {
                let z = i as f64 * 1e-3;
                (normal_cdf_approx(z) - phi(z)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1.5e-4, "{worst}");
    }

    #[test]
    fn day_risk_examples() {
        assert_eq!(day_risk(50.0, 0.0, 30.0), 0.0);
        assert_eq!(tail_risks(40.0, 3.0, 40.0).0, 0.5);
        let oracle = phi(-2.0) + 1.0 - phi(3.0);
        assert!((day_risk(70.0, 10.0, 50.0) - 0.0241).abs() < 5e-4);
        assert!((day_risk(70.0, 10.0, 50.0) - oracle).abs() < 3e-4);
        assert_eq!(day_risk(120.0, 0.0, 30.0), 1.0);
    }
}
