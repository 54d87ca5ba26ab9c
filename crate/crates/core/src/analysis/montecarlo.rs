use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::market::derive_seed;
use crate::qp::PricingProblem;

const BLOCK: usize = 4096;
const MC_STREAM: u64 = 0x6d63_6576;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub samples: usize,
    pub margin_mean: f64,
    pub margin_sd: f64,
    pub utilization_mean: Vec<f64>,
    pub utilization_var: Vec<f64>,
    /// Share of draws with `u < c` or `u > 100`.
    pub violation_freq: Vec<f64>,
    pub lower_freq: Vec<f64>,
    pub upper_freq: Vec<f64>,
}

/// Running moments merged with the pairwise update, so block order fixes the result.
#[derive(Clone)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn new() -> Self {
        Self { n: 0.0, mean: 0.0, m2: 0.0 }
    }

    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }

    fn var(&self) -> f64 {
        if self.n > 1.0 {
            self.m2 / (self.n - 1.0)
        } else {
            0.0
        }
    }
}

struct Block {
    margin: Moments,
    util: Vec<Moments>,
    lower: Vec<u64>,
    upper: Vec<u64>,
}

/// Samples demand `N(D, sd_D^2)` truncated at 0 per cell and elasticity
/// `N(eps, sd_eps^2)` per class, then evaluates margin and utilization exactly.
/// Blocks of draws run in parallel on derived seeds.
pub fn monte_carlo_eval(
    problem: &PricingProblem,
    multipliers: &[f64],
    samples: usize,
    seed: u64,
) -> Result<MonteCarloReport, AnalysisError> {
    problem.validate()?;
    if samples == 0 {
        return Err(AnalysisError::InvalidInput("samples must be at least 1".into()));
    }
    if multipliers.len() != problem.n_cells() {
        return Err(AnalysisError::InvalidInput(format!(
            "{} multipliers for {} cells",
            multipliers.len(),
            problem.n_cells()
        )));
    }
    let dims = problem.grid.dims;
    let n_days = dims.n_pickup_days;
    let day_cells = problem.day_cells();
    let class_of: Vec<usize> = dims.cells().map(|c| dims.class_index(c.abt, c.lor)).collect();
    let c = problem.risk.threshold_c;
    let n_blocks = samples.div_ceil(BLOCK);

    let blocks: Vec<Block> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[MC_STREAM, b as u64]));
            let count = BLOCK.min(samples - b * BLOCK);
            let mut out = Block {
                margin: Moments::new(),
                util: vec![Moments::new(); n_days],
                lower: vec![0; n_days],
                upper: vec![0; n_days],
            };
            let mut eps = vec![0.0; problem.elasticity.len()];
            let mut dw = vec![0.0; problem.n_cells()];
            for _ in 0..count {
                for (k, (m, s)) in problem.elasticity.iter().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    eps[k] = m + s * z;
                }
                let mut margin = 0.0;
                for i in 0..problem.n_cells() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let d = (problem.forecast.mean[i] + problem.forecast.sd[i] * z).max(0.0);
                    let x = multipliers[i];
                    let w = 1.0 - eps[class_of[i]] * (1.0 - x);
                    let (kw, kf) = problem.cost_split(i);
                    margin += d * (w * (problem.grid.price[i] * x - kw) - kf);
                    dw[i] = d * w;
                }
                out.margin.push(margin);
                for (t, cells) in day_cells.iter().enumerate() {
                    let s: f64 = cells.iter().map(|&i| dw[i]).sum();
                    let u = 100.0 / f64::from(problem.grid.fleet[t]) * (problem.base_on_rents[t] + s);
                    out.util[t].push(u);
                    out.lower[t] += u64::from(u < c);
                    out.upper[t] += u64::from(u > 100.0);
                }
            }
            out
        })
        .collect();

    let mut margin = Moments::new();
    let mut util = vec![Moments::new(); n_days];
    let mut lower = vec![0u64; n_days];
    let mut upper = vec![0u64; n_days];
    for b in &blocks {
        margin.merge(&b.margin);
        for t in 0..n_days {
            util[t].merge(&b.util[t]);
            lower[t] += b.lower[t];
            upper[t] += b.upper[t];
        }
    }
    let n = samples as f64;
    Ok(MonteCarloReport {
        samples,
        margin_mean: margin.mean,
        margin_sd: margin.var().sqrt(),
        utilization_mean: util.iter().map(|m| m.mean).collect(),
        utilization_var: util.iter().map(Moments::var).collect(),
        violation_freq: lower.iter().zip(&upper).map(|(l, u)| (l + u) as f64 / n).collect(),
        lower_freq: lower.iter().map(|l| *l as f64 / n).collect(),
        upper_freq: upper.iter().map(|u| *u as f64 / n).collect(),
    })
}
