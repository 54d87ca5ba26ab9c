#![allow(dead_code)]

use fleet_pricer::demand::DemandForecast;
use fleet_pricer::market::{GridDims, MarketGrid};
use fleet_pricer::qp::PricingProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn grid(dims: GridDims, fleet: Vec<u32>, price: Vec<f64>, cost: Vec<f64>) -> MarketGrid {
    let nc = dims.n_cells();
    MarketGrid {
        dims,
        fleet,
        price,
        cost,
        true_elasticity: vec![-1.5; dims.n_classes()],
        expected_utilization: 70.0,
        offer_rate: vec![40.0; nc],
        base_cvr: 0.25,
        peak: vec![false; dims.n_pickup_days],
        branch_type: "airport".into(),
        car_group: "compact".into(),
    }
}

/// Seeded instance with prices, costs, demand and elasticities drawn from fixed ranges.
pub fn random_problem(seed: u64, n: usize, m: usize, l: usize) -> PricingProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = GridDims::new(n, m, l).unwrap();
    let nc = dims.n_cells();
    let fleet = (0..n).map(|_| rng.random_range(40..80)).collect();
    let price = (0..nc).map(|_| rng.random_range(30.0..90.0)).collect();
    let cost = (0..nc).map(|_| rng.random_range(5.0..20.0)).collect();
    let g = grid(dims, fleet, price, cost);
    let mean: Vec<f64> = (0..nc).map(|_| rng.random_range(2.0..15.0)).collect();
    let sd: Vec<f64> = mean.iter().map(|d| d * rng.random_range(0.05..0.3)).collect();
    let el = (0..dims.n_classes()).map(|_| (rng.random_range(-3.0..-0.5), rng.random_range(0.0..0.3))).collect();
    PricingProblem::new(g, DemandForecast::new(dims, 0, mean, sd), el)
}

/// One cell with zero cost, so the unconstrained vertex is `(e - 1) / (2 e)`.
pub fn single_cell(elasticity: f64) -> PricingProblem {
    let dims = GridDims::new(1, 1, 1).unwrap();
    let g = grid(dims, vec![100], vec![50.0], vec![0.0]);
    PricingProblem::new(g, DemandForecast::new(dims, 0, vec![10.0], vec![1.0]), vec![(elasticity, 0.0)])
}
