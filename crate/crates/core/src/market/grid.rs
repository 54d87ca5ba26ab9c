use serde::{Deserialize, Serialize};

use super::MarketError;

/// Size of the pricing lattice: pickup days `N`, advance booking times `M` and
/// lengths of rent `L`.
///
/// Cells are indexed by `(day, abt, lor)` with `day in 0..N`, `abt in 0..M` and
/// `lor in 1..=L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub n_pickup_days: usize,
    pub max_abt: usize,
    pub max_lor: usize,
}

/// One lattice cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub day: usize,
    pub abt: usize,
    pub lor: usize,
}

impl GridDims {
    pub fn new(n_pickup_days: usize, max_abt: usize, max_lor: usize) -> Result<Self, MarketError> {
        if n_pickup_days == 0 || max_abt == 0 || max_lor == 0 {
            return Err(MarketError::InvalidDims { n: n_pickup_days, m: max_abt, l: max_lor });
        }
        Ok(Self { n_pickup_days, max_abt, max_lor })
    }

    pub fn n_cells(&self) -> usize {
        self.n_pickup_days * self.max_abt * self.max_lor
    }

    /// Number of `(abt, lor)` classes, the granularity of elasticities.
    pub fn n_classes(&self) -> usize {
        self.max_abt * self.max_lor
    }

    pub fn cell_index(&self, cell: Cell) -> usize {
        debug_assert!(cell.day < self.n_pickup_days);
        debug_assert!(cell.abt < self.max_abt);
        debug_assert!(cell.lor >= 1 && cell.lor <= self.max_lor);
        (cell.day * self.max_abt + cell.abt) * self.max_lor + (cell.lor - 1)
    }

    pub fn cell(&self, index: usize) -> Cell {
        let lor = index % self.max_lor + 1;
        let rest = index / self.max_lor;
        Cell { day: rest / self.max_abt, abt: rest % self.max_abt, lor }
    }

    pub fn class_index(&self, abt: usize, lor: usize) -> usize {
        abt * self.max_lor + (lor - 1)
    }

    /// Cells in index order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n_cells()).map(move |i| self.cell(i))
    }
}

/// World state of the market: fleet, prices, costs and ground-truth elasticities
/// per lattice cell, plus the offer profile the simulator draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketGrid {
    pub dims: GridDims,
    /// Available fleet per pickup day.
    pub fleet: Vec<u32>,
    /// Baseline price per cell (whole rental).
    pub price: Vec<f64>,
    /// Cost per cell (per rental in `per_booking` accounting).
    pub cost: Vec<f64>,
    /// Ground-truth elasticity per `(abt, lor)` class.
    pub true_elasticity: Vec<f64>,
    /// Expected utilization in percent.
    pub expected_utilization: f64,
    /// Mean offers per booking day per cell.
    pub offer_rate: Vec<f64>,
    /// Conversion rate of offers into reservations at the baseline price.
    pub base_cvr: f64,
    /// Peak flag per pickup day.
    pub peak: Vec<bool>,
    pub branch_type: String,
    pub car_group: String,
}

impl MarketGrid {
    /// Checks every grid invariant.
    pub fn validate(&self) -> Result<(), MarketError> {
        let d = &self.dims;
        GridDims::new(d.n_pickup_days, d.max_abt, d.max_lor)?;
        let bad = |msg: String| Err(MarketError::InvalidGrid(msg));
        if self.fleet.len() != d.n_pickup_days {
            return bad(format!("fleet has {} entries, expected {}", self.fleet.len(), d.n_pickup_days));
        }
        if self.fleet.iter().any(|&f| f < 1) {
            return bad("every pickup day needs a fleet of at least one vehicle".into());
        }
        for (name, v) in [("price", &self.price), ("cost", &self.cost), ("offer_rate", &self.offer_rate)] {
            if v.len() != d.n_cells() {
                return bad(format!("{name} has {} entries, expected {}", v.len(), d.n_cells()));
            }
        }
        if self.price.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return bad("prices must be positive".into());
        }
        if self.cost.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return bad("costs must be non-negative".into());
        }
        if self.offer_rate.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
            return bad("offer rates must be non-negative".into());
        }
        if self.true_elasticity.len() != d.n_classes() {
            return bad(format!(
                "true_elasticity has {} entries, expected {}",
                self.true_elasticity.len(),
                d.n_classes()
            ));
        }
        if self.true_elasticity.iter().any(|&e| !(e < 0.0)) {
            return bad("elasticities must be strictly negative".into());
        }
        if !(0.0..=100.0).contains(&self.expected_utilization) {
            return bad("expected utilization must lie in [0, 100]".into());
        }
        if !(self.base_cvr > 0.0 && self.base_cvr <= 1.0) {
            return bad("base conversion rate must lie in (0, 1]".into());
        }
        if self.peak.len() != d.n_pickup_days {
            return bad(format!("peak has {} entries, expected {}", self.peak.len(), d.n_pickup_days));
        }
        Ok(())
    }

    pub fn price_at(&self, cell: Cell) -> f64 {
        self.price[self.dims.cell_index(cell)]
    }

    pub fn cost_at(&self, cell: Cell) -> f64 {
        self.cost[self.dims.cell_index(cell)]
    }

    pub fn elasticity_at(&self, abt: usize, lor: usize) -> f64 {
        self.true_elasticity[self.dims.class_index(abt, lor)]
    }

    /// Expected reservations per cell at the baseline price.
    pub fn baseline_demand(&self) -> Vec<f64> {
        self.offer_rate.iter().map(|r| r * self.base_cvr).collect()
    }

    /// Template day used for an absolute pickup day when the grid is treated as
    /// a repeating cycle of `N` days.
    pub fn template_day(&self, pickup_day: i64) -> usize {
        pickup_day.rem_euclid(self.dims.n_pickup_days as i64) as usize
    }

    /// The grid re-indexed so that window day `i` is template day `(offset + i) mod N`.
    pub fn rotated(&self, offset: i64) -> MarketGrid {
        let d = self.dims;
        let map = |i: usize| self.template_day(offset + i as i64);
        let per_cell =
            |v: &Vec<f64>| d.cells().map(|c| v[d.cell_index(Cell { day: map(c.day), ..c })]).collect::<Vec<_>>();
        MarketGrid {
            dims: d,
            fleet: (0..d.n_pickup_days).map(|i| self.fleet[map(i)]).collect(),
            price: per_cell(&self.price),
            cost: per_cell(&self.cost),
            true_elasticity: self.true_elasticity.clone(),
            expected_utilization: self.expected_utilization,
            offer_rate: per_cell(&self.offer_rate),
            base_cvr: self.base_cvr,
            peak: (0..d.n_pickup_days).map(|i| self.peak[map(i)]).collect(),
            branch_type: self.branch_type.clone(),
            car_group: self.car_group.clone(),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn small_grid() -> MarketGrid {
        let dims = GridDims::new(3, 2, 2).unwrap();
        let n = dims.n_cells();
        MarketGrid {
            dims,
            fleet: vec![100, 100, 100],
            price: (0..n).map(|i| 50.0 + i as f64).collect(),
            cost: vec![10.0; n],
            true_elasticity: vec![-1.5; dims.n_classes()],
            expected_utilization: 80.0,
            offer_rate: vec![40.0; n],
            base_cvr: 0.25,
            peak: vec![false, false, true],
            branch_type: "airport".into(),
            car_group: "compact".into(),
        }
    }

    #[test]
    fn dims_reject_zero() {
        assert!(matches!(GridDims::new(0, 2, 2), Err(MarketError::InvalidDims { .. })));
        assert!(GridDims::new(1, 1, 1).is_ok());
    }

    #[test]
    fn cell_index_is_a_bijection() {
        let d = GridDims::new(4, 3, 5).unwrap();
        let mut seen = vec![false; d.n_cells()];
        for day in 0..4 {
            for abt in 0..3 {
                for lor in 1..=5 {
                    let c = Cell { day, abt, lor };
                    let i = d.cell_index(c);
                    assert!(!seen[i]);
                    seen[i] = true;
                    assert_eq!(d.cell(i), c);
                }
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn validate_catches_bad_fields() {
        let g = small_grid();
        assert!(g.validate().is_ok());

        let mut bad = g.clone();
        bad.true_elasticity[0] = 0.0;
        assert!(bad.validate().is_err());

        let mut bad = g.clone();
        bad.fleet[1] = 0;
        assert!(bad.validate().is_err());

        let mut bad = g.clone();
        bad.expected_utilization = 101.0;
        assert!(bad.validate().is_err());

        let mut bad = g;
        bad.price[3] = -1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rotation_wraps_days() {
        let g = small_grid();
        let r = g.rotated(2);
        assert_eq!(r.peak, vec![true, false, false]);
        let c = Cell { day: 0, abt: 1, lor: 2 };
        assert_eq!(r.price_at(c), g.price_at(Cell { day: 2, ..c }));
        assert_eq!(g.rotated(3), g);
    }
}
