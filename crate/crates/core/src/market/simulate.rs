use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Cell, Covariates, MarketError, MarketGrid};

/// How non-randomized offers are priced by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PricingMode {
    /// Prices come from the supplied policy (1.0 for the heuristic).
    #[default]
    Randomized,
    /// Prices react to the day's demand shock: `m = 1 + gain (exp(s) - 1)`,
    /// which correlates price with the error term.
    Endogenous { gain: f64 },
}

/// Price randomization applied on top of the pricing policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationConfig {
    pub multiplier_low: f64,
    pub multiplier_high: f64,
    /// Expected share of records that receive a uniformly drawn multiplier.
    pub randomized_fraction: f64,
    /// Standard deviation of the daily log-normal demand shock. Zero switches
    /// the simulator to deterministic counts (rounded means).
    pub noise_sd: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: PricingMode,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            multiplier_low: 0.85,
            multiplier_high: 1.15,
            randomized_fraction: 0.3,
            noise_sd: 0.05,
            seed: 7,
            mode: PricingMode::Randomized,
        }
    }
}

impl RandomizationConfig {
    pub fn validate(&self) -> Result<(), MarketError> {
        let bad = |m: &str| Err(MarketError::InvalidRandomization(m.to_string()));
        if !(self.multiplier_low > 0.0) || !(self.multiplier_high > 0.0) {
            return bad("multipliers must be positive");
        }
        if self.multiplier_low > self.multiplier_high {
            return bad("multiplier_low exceeds multiplier_high");
        }
        if !(0.0..=1.0).contains(&self.randomized_fraction) {
            return bad("randomized_fraction must lie in [0, 1]");
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return bad("noise_sd must be non-negative");
        }
        if let PricingMode::Endogenous { gain } = self.mode {
            if !gain.is_finite() {
                return bad("endogenous gain must be finite");
            }
        }
        Ok(())
    }
}

/// One offer bucket: all offers made on a booking day for one pickup day and LOR.
///
/// Dates are day offsets from the run epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookingRecord {
    pub booking_day: i64,
    pub pickup_day: i64,
    pub lor: u32,
    pub offered_multiplier: f64,
    pub offers: u32,
    pub reservations: u32,
    pub revenue_per_day: f64,
    pub branch_type: String,
    pub car_group: String,
    pub peak: bool,
}

impl BookingRecord {
    pub fn abt(&self) -> i64 {
        self.pickup_day - self.booking_day
    }

    pub fn covariates(&self) -> Covariates {
        Covariates {
            branch_type: self.branch_type.clone(),
            car_group: self.car_group.clone(),
            peak: self.peak,
            lor: self.lor,
            abt: self.abt() as u32,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub(crate) fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

const SHOCK_STREAM: u64 = 0x5_eed0_fda7;

/// Log-scale demand deviation of a booking day.
fn day_shock(rand: &RandomizationConfig, day: i64) -> f64 {
    if rand.noise_sd == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rand.seed, &[SHOCK_STREAM, day as u64]));
    let z: f64 = StandardNormal.sample(&mut rng);
    rand.noise_sd * z
}

/// Simulates the offers made on one booking day for every `(abt, lor)` class.
///
/// `policy(abt, lor)` gives the multiplier of non-randomized offers. Every
/// record draws from its own stream keyed by `(seed, day, abt, lor)`, so two
/// runs that differ only in policy share their random numbers.
pub fn generate_day(
    grid: &MarketGrid,
    rand: &RandomizationConfig,
    day: i64,
    policy: &dyn Fn(usize, usize) -> f64,
) -> Vec<BookingRecord> {
    let d = grid.dims;
    let shock = day_shock(rand, day);
    let demand_factor = (shock - 0.5 * rand.noise_sd * rand.noise_sd).exp();
    let mut out = Vec::with_capacity(d.n_classes());
    for abt in 0..d.max_abt {
        for lor in 1..=d.max_lor {
            let pickup_day = day + abt as i64;
            let cell = Cell { day: grid.template_day(pickup_day), abt, lor };
            let idx = d.cell_index(cell);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rand.seed, &[day as u64, abt as u64, lor as u64]));
            let randomized = rng.random::<f64>() < rand.randomized_fraction;
            let uniform = rand.multiplier_low + (rand.multiplier_high - rand.multiplier_low) * rng.random::<f64>();
            let multiplier = if randomized {
                uniform
            } else {
                match rand.mode {
                    PricingMode::Randomized => policy(abt, lor),
                    PricingMode::Endogenous { gain } => {
                        (1.0 + gain * (shock.exp() - 1.0)).clamp(rand.multiplier_low, rand.multiplier_high)
                    }
                }
            };
            let multiplier = round6(multiplier);
            let elasticity = grid.elasticity_at(abt, lor);
            let response = (1.0 - elasticity * (1.0 - multiplier)).max(0.0);
            let rate = grid.offer_rate[idx];
            let (offers, reservations) = if rand.noise_sd == 0.0 {
                let offers = rate.round();
                let p = (grid.base_cvr * response).clamp(0.0, 1.0);
                (offers as u32, (offers * p).round() as u32)
            } else {
                let offers =
                    if rate > 0.0 { Poisson::new(rate).expect("positive rate").sample(&mut rng) as u64 } else { 0 };
                let p = (grid.base_cvr * response * demand_factor).clamp(0.0, 1.0);
                let res = Binomial::new(offers, p).expect("valid binomial").sample(&mut rng);
                (offers as u32, res as u32)
            };
            let price = grid.price[idx];
            out.push(BookingRecord {
                booking_day: day,
                pickup_day,
                lor: lor as u32,
                offered_multiplier: multiplier,
                offers,
                reservations,
                revenue_per_day: round6(reservations as f64 * price * multiplier / lor as f64),
                branch_type: grid.branch_type.clone(),
                car_group: grid.car_group.clone(),
                peak: grid.peak[cell.day],
            });
        }
    }
    out
}

/// Booking history for booking days `0..horizon` under the heuristic price
/// (multiplier 1) plus randomization.
pub fn generate_history(
    grid: &MarketGrid,
    rand: &RandomizationConfig,
    horizon: usize,
) -> Result<Vec<BookingRecord>, MarketError> {
    grid.validate()?;
    rand.validate()?;
    if horizon < grid.dims.max_abt {
        return Err(MarketError::InvalidHorizon { horizon, max_abt: grid.dims.max_abt });
    }
    Ok((0..horizon as i64).flat_map(|day| generate_day(grid, rand, day, &|_, _| 1.0)).collect())
}

/// Vehicles on rent on `day`: reservations picked up on or before `day` and
/// not yet returned (`pickup <= day < pickup + lor`).
pub fn on_rents(records: &[BookingRecord], day: i64) -> u64 {
    records
        .iter()
        .filter(|r| r.pickup_day <= day && day < r.pickup_day + r.lor as i64)
        .map(|r| r.reservations as u64)
        .sum()
}
