use serde::{Deserialize, Serialize};

use super::model::{tail_risks, CostMode};
use super::QpError;
use crate::demand::DemandForecast;
use crate::market::{Cell, MarketGrid};

/// Which bookings count as on-rent on day `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexSet {
    /// Every booking picked up on day `i` with LOR `k` is on rent for `i <= t < i + k`.
    #[default]
    FullAbt,
    /// Literal index ranges: `i <= t`, `j <= t - i`, `k >= t - i`.
    PaperVerbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// `(100/F)^2 sum w^2 sd_D^2`, the variance of the utilization sum.
    #[default]
    Statistical,
    /// `(100/F) sum w sd_D^2`.
    PaperVerbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    /// Weight of the margin variance in the objective.
    pub lambda: f64,
    /// Lower utilization threshold in percent.
    pub threshold_c: f64,
    /// Affordable probability per utilization tail.
    pub affordable_p: f64,
    pub chance_constrained: bool,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self { lambda: 0.0, threshold_c: 30.0, affordable_p: 0.05, chance_constrained: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingProblem {
    pub grid: MarketGrid,
    pub forecast: DemandForecast,
    /// `(mean, sd)` per `(abt, lor)` class.
    pub elasticity: Vec<(f64, f64)>,
    pub bounds: (f64, f64),
    /// Utilization band as multiples of the grid's expected utilization.
    pub band: (f64, f64),
    pub risk: RiskConfig,
    pub cost_mode: CostMode,
    pub index_set: IndexSet,
    pub variance_mode: VarianceMode,
    /// Cells whose multiplier is fixed at 1.
    pub locked: Vec<bool>,
    /// Vehicles already on rent per day from bookings outside the lattice.
    pub base_on_rents: Vec<f64>,
}

impl PricingProblem {
    /// A problem with default bounds `[0.85, 1.15]`, a band of `[0, 10]`
    /// multiples of `u0` and no risk terms.
    pub fn new(grid: MarketGrid, forecast: DemandForecast, elasticity: Vec<(f64, f64)>) -> Self {
        let n_cells = grid.dims.n_cells();
        let n_days = grid.dims.n_pickup_days;
        Self {
            grid,
            forecast,
            elasticity,
            bounds: (0.85, 1.15),
            band: (0.0, 10.0),
            risk: RiskConfig::default(),
            cost_mode: CostMode::PerBooking,
            index_set: IndexSet::FullAbt,
            variance_mode: VarianceMode::Statistical,
            locked: vec![false; n_cells],
            base_on_rents: vec![0.0; n_days],
        }
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let bad = |m: String| Err(QpError::InvalidProblem(m));
        self.grid.validate().map_err(|e| QpError::InvalidProblem(e.to_string()))?;
        let d = self.grid.dims;
        if self.forecast.dims != d || !self.forecast.is_valid() {
            return bad("forecast shape does not match the grid or has negative values".into());
        }
        if self.elasticity.len() != d.n_classes() {
            return bad(format!("{} elasticities for {} classes", self.elasticity.len(), d.n_classes()));
        }
        if self.elasticity.iter().any(|(m, s)| !m.is_finite() || !(*s >= 0.0)) {
            return bad("elasticity means must be finite and sds non-negative".into());
        }
        let (lo, hi) = self.bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("bounds ({lo}, {hi}) must satisfy 0 < min <= max"));
        }
        let (a, b) = self.band;
        // an infinite upper band makes the capacity rows vacuous
        if !(a >= 0.0 && a.is_finite() && a <= b) {
            return bad(format!("band ({a}, {b}) must satisfy 0 <= a <= b"));
        }
        let r = &self.risk;
        if !(r.lambda >= 0.0) || !(r.affordable_p > 0.0 && r.affordable_p < 1.0) || !r.threshold_c.is_finite() {
            return bad("risk needs lambda >= 0, affordable_p in (0,1) and a finite threshold".into());
        }
        if self.locked.len() != d.n_cells() || self.base_on_rents.len() != d.n_pickup_days {
            return bad("locked mask or base on-rents have the wrong length".into());
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.grid.dims.n_cells()
    }

    pub fn elasticity_of(&self, cell: Cell) -> (f64, f64) {
        self.elasticity[self.grid.dims.class_index(cell.abt, cell.lor)]
    }

    /// Days on which a cell counts toward utilization, as an inclusive interval.
    pub fn footprint(&self, cell: Cell) -> Option<(usize, usize)> {
        let n = self.grid.dims.n_pickup_days;
        let (start, end) = match self.index_set {
            IndexSet::FullAbt => (cell.day, cell.day + cell.lor - 1),
            IndexSet::PaperVerbatim => (cell.day + cell.abt, cell.day + cell.lor),
        };
        let end = end.min(n - 1);
        (start <= end).then_some((start, end))
    }

    /// Cell indices counted on each day.
    pub fn day_cells(&self) -> Vec<Vec<usize>> {
        let d = self.grid.dims;
        let mut out = vec![Vec::new(); d.n_pickup_days];
        for (idx, c) in d.cells().enumerate() {
            if let Some((s, e)) = self.footprint(c) {
                for t in s..=e {
                    out[t].push(idx);
                }
            }
        }
        out
    }

    /// Demand weight `w = 1 - eps (1 - x)` (unfloored, as in the QP).
    pub fn weight(&self, idx: usize, x: f64) -> f64 {
        let (e, _) = self.elasticity_of(self.grid.dims.cell(idx));
        1.0 - e * (1.0 - x)
    }

    pub fn utilization(&self, x: &[f64]) -> Vec<f64> {
        self.day_cells()
            .iter()
            .enumerate()
            .map(|(t, cells)| {
                let s: f64 = cells.iter().map(|&c| self.forecast.mean[c] * self.weight(c, x[c])).sum();
                100.0 / f64::from(self.grid.fleet[t]) * (self.base_on_rents[t] + s)
            })
            .collect()
    }

    pub fn utilization_variance(&self, x: &[f64], mode: VarianceMode) -> Vec<f64> {
        self.day_cells()
            .iter()
            .enumerate()
            .map(|(t, cells)| {
                let f = f64::from(self.grid.fleet[t]);
                match mode {
                    VarianceMode::Statistical => {
                        let s: f64 = cells.iter().map(|&c| (self.weight(c, x[c]) * self.forecast.sd[c]).powi(2)).sum();
                        (100.0 / f).powi(2) * s
                    }
                    VarianceMode::PaperVerbatim => {
                        let s: f64 = cells.iter().map(|&c| self.weight(c, x[c]) * self.forecast.sd[c].powi(2)).sum();
                        100.0 / f * s
                    }
                }
            })
            .collect()
    }

    /// Per-booking and fixed cost coefficients `(kappa_w, kappa_f)` so that the
    /// cell margin is `D (w (P x - kappa_w) - kappa_f)`.
    pub(crate) fn cost_split(&self, idx: usize) -> (f64, f64) {
        let c = self.grid.cost[idx];
        match self.cost_mode {
            CostMode::PerBooking => (c, 0.0),
            CostMode::Fixed => (0.0, c),
        }
    }

    pub fn cell_margin(&self, idx: usize, x: f64) -> f64 {
        let (kw, kf) = self.cost_split(idx);
        let d = self.forecast.mean[idx];
        d * (self.weight(idx, x) * (self.grid.price[idx] * x - kw) - kf)
    }

    /// Expected margin including every constant term.
    pub fn margin(&self, x: &[f64]) -> f64 {
        (0..self.n_cells()).map(|i| self.cell_margin(i, x[i])).sum()
    }

    /// Delta-method margin variance from demand and elasticity uncertainty.
    pub fn margin_variance(&self, x: &[f64]) -> f64 {
        let d = self.grid.dims;
        let mut by_class = vec![0.0; d.n_classes()];
        let mut var = 0.0;
        for (idx, c) in d.cells().enumerate() {
            let (kw, kf) = self.cost_split(idx);
            let p = self.grid.price[idx];
            let g = self.weight(idx, x[idx]) * (p * x[idx] - kw) - kf;
            var += (g * self.forecast.sd[idx]).powi(2);
            by_class[d.class_index(c.abt, c.lor)] += -self.forecast.mean[idx] * (1.0 - x[idx]) * (p * x[idx] - kw);
        }
        var + by_class.iter().zip(&self.elasticity).map(|(h, (_, s))| (h * s).powi(2)).sum::<f64>()
    }

    /// `margin - lambda * variance`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let m = self.margin(x);
        if self.risk.lambda > 0.0 {
            m - self.risk.lambda * self.margin_variance(x)
        } else {
            m
        }
    }

    pub fn u0(&self) -> f64 {
        self.grid.expected_utilization
    }

    /// Whether `x` satisfies the band and, when enabled, the per-tail chance
    /// constraints, within `tol` (percent for the band, probability for risk).
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        let u = self.utilization(x);
        let (a, b) = self.band;
        let u0 = self.u0();
        if u.iter().any(|&v| v < a * u0 - tol || v > b * u0 + tol) {
            return false;
        }
        if self.risk.chance_constrained {
            let var = self.utilization_variance(x, self.variance_mode);
            for (m, v) in u.iter().zip(&var) {
                let (lo, hi) = tail_risks(*m, v.max(0.0).sqrt(), self.risk.threshold_c);
                if lo > self.risk.affordable_p + tol || hi > self.risk.affordable_p + tol {
                    return false;
                }
            }
        }
        true
    }

    /// Multipliers fixed outside the optimization: locked cells stay at 1.
    pub(crate) fn fixed_value(&self, idx: usize) -> Option<f64> {
        if self.locked[idx] {
            return Some(1.0);
        }
        // zero demand only matters through its sd in the risk terms
        let uses_sd = self.risk.lambda > 0.0 || self.risk.chance_constrained;
        let inert = self.forecast.mean[idx] == 0.0 && (!uses_sd || self.forecast.sd[idx] == 0.0);
        inert.then(|| 1.0f64.clamp(self.bounds.0, self.bounds.1))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::market::GridDims;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Random instance with concave objective and a given band.
    pub fn random_problem(seed: u64, n: usize, m: usize, l: usize) -> PricingProblem {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dims = GridDims::new(n, m, l).unwrap();
        let nc = dims.n_cells();
        let grid = MarketGrid {
            dims,
            fleet: (0..n).map(|_| rng.random_range(40..80)).collect(),
            price: (0..nc).map(|_| rng.random_range(30.0..90.0)).collect(),
            cost: (0..nc).map(|_| rng.random_range(5.0..20.0)).collect(),
            true_elasticity: vec![-1.5; dims.n_classes()],
            expected_utilization: 70.0,
            offer_rate: vec![40.0; nc],
            base_cvr: 0.25,
            peak: vec![false; n],
            branch_type: "airport".into(),
            car_group: "compact".into(),
        };
        let mean: Vec<f64> = (0..nc).map(|_| rng.random_range(2.0..15.0)).collect();
        let sd: Vec<f64> = mean.iter().map(|d| d * rng.random_range(0.05..0.3)).collect();
        let el = (0..dims.n_classes()).map(|_| (rng.random_range(-3.0..-0.5), rng.random_range(0.0..0.3))).collect();
        PricingProblem::new(grid, DemandForecast::new(dims, 0, mean, sd), el)
    }

    #[test]
    fn single_cell_utilization() {
        let dims = GridDims::new(1, 1, 1).unwrap();
        let mut p = random_problem(1, 1, 1, 1);
        p.grid.fleet = vec![100];
        p.forecast = DemandForecast::new(dims, 0, vec![80.0], vec![5.0]);
        assert!((p.utilization(&[1.0])[0] - 80.0).abs() < 1e-12);
        assert!((p.utilization_variance(&[1.0], VarianceMode::Statistical)[0] - 25.0).abs() < 1e-12);
        assert!((p.utilization_variance(&[1.0], VarianceMode::PaperVerbatim)[0] - 25.0).abs() < 1e-12);
        p.grid.fleet = vec![50];
        assert!((p.utilization_variance(&[1.0], VarianceMode::Statistical)[0] - 100.0).abs() < 1e-12);
        assert!((p.utilization_variance(&[1.0], VarianceMode::PaperVerbatim)[0] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn zero_demand_zero_utilization() {
        let mut p = random_problem(2, 3, 2, 2);
        p.forecast.mean.iter_mut().for_each(|v| *v = 0.0);
        p.forecast.sd.iter_mut().for_each(|v| *v = 0.0);
        let x = vec![0.9; p.n_cells()];
        assert!(p.utilization(&x).iter().all(|u| *u == 0.0));
        assert!(p.utilization_variance(&x, VarianceMode::Statistical).iter().all(|u| *u == 0.0));
    }

    #[test]
    fn unit_multipliers_sum_demand() {
        let p = random_problem(3, 4, 3, 3);
        let u = p.utilization(&vec![1.0; p.n_cells()]);
        for (t, cells) in p.day_cells().iter().enumerate() {
            let s: f64 = cells.iter().map(|&c| p.forecast.mean[c]).sum();
            assert!((u[t] - 100.0 * s / f64::from(p.grid.fleet[t])).abs() < 1e-9);
        }
    }

    #[test]
    fn index_sets() {
        let mut p = random_problem(4, 3, 2, 2);
        let d = p.grid.dims;
        assert_eq!(p.footprint(Cell { day: 0, abt: 1, lor: 2 }), Some((0, 1)));
        assert_eq!(p.footprint(Cell { day: 2, abt: 0, lor: 2 }), Some((2, 2)));
        p.index_set = IndexSet::PaperVerbatim;
        assert_eq!(p.footprint(Cell { day: 0, abt: 1, lor: 2 }), Some((1, 2)));
        assert_eq!(p.footprint(Cell { day: 2, abt: 1, lor: 1 }), None);
        assert_eq!(d.n_cells(), 12);
    }

    #[test]
    fn baseline_identity() {
        let p = random_problem(5, 3, 3, 2);
        let m = p.margin(&vec![1.0; p.n_cells()]);
        let oracle: f64 = (0..p.n_cells()).map(|i| p.forecast.mean[i] * (p.grid.price[i] - p.grid.cost[i])).sum();
        assert!((m - oracle).abs() <= 1e-9 * oracle.abs());
    }

    proptest! {
        #[test]
        fn utilization_is_affine(seed in 0u64..1000, alpha in 0.0..1.0f64) {
            let p = random_problem(seed, 3, 2, 2);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 1);
            let x: Vec<f64> = (0..p.n_cells()).map(|_| rng.random_range(0.85..1.15)).collect();
            let y: Vec<f64> = (0..p.n_cells()).map(|_| rng.random_range(0.85..1.15)).collect();
            let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let (ux, uy, uz) = (p.utilization(&x), p.utilization(&y), p.utilization(&z));
            for t in 0..ux.len() {
                prop_assert!((uz[t] - (alpha * ux[t] + (1.0 - alpha) * uy[t])).abs() < 1e-9);
            }
        }
    }
}
