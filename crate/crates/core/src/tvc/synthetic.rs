//! Seeded synthetic inputs for the time-varying models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ElasticityHistory, TvcPeriod, TvcSeries};

/// Multiplier range used for synthetic designs.
pub const MULTIPLIER_RANGE: (f64, f64) = (0.85, 1.15);

/// Log-log observations with slope `betas[t]` in period `t`, intercept `alpha`
/// and Gaussian noise of sd `noise_sd` on the log quantity.
pub fn tvc_series(betas: &[f64], n_per_period: usize, noise_sd: f64, alpha: f64, seed: u64) -> TvcSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd.max(0.0)).expect("finite sd");
    let periods = betas
        .iter()
        .enumerate()
        .map(|(t, &beta)| {
            let design: Vec<f64> =
                (0..n_per_period).map(|_| rng.random_range(MULTIPLIER_RANGE.0..=MULTIPLIER_RANGE.1).ln()).collect();
            let response = design
                .iter()
                .map(|x| alpha + beta * x + if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 })
                .collect();
            TvcPeriod { t: t as i64, design, response, rpd: 100.0 }
        })
        .collect();
    TvcSeries::new(periods).expect("at least two periods")
}

/// Linear drift from `start` to `end` over `periods` points.
pub fn linear_drift(start: f64, end: f64, periods: usize) -> Vec<f64> {
    let d = (periods.max(2) - 1) as f64;
    (0..periods).map(|t| start + (end - start) * t as f64 / d).collect()
}

/// Daily elasticity history with a downward trend, weekly revenue cycle and a
/// revenue-driven component:
/// `beta_t = -1 - t/len + 0.004 (rpd_t - 100) + noise`.
pub fn drifting_history(len: usize, seed: u64) -> ElasticityHistory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rpd_noise = Normal::new(0.0, 2.0).expect("finite sd");
    let beta_noise = Normal::new(0.0, 0.05).expect("finite sd");
    let mut h = ElasticityHistory::default();
    for t in 0..len {
        let tf = t as f64;
        let rpd = 100.0 + 15.0 * (2.0 * std::f64::consts::PI * tf / 7.0).sin() + rpd_noise.sample(&mut rng);
        let beta = -1.0 - tf / len as f64 + 0.004 * (rpd - 100.0) + beta_noise.sample(&mut rng);
        h.t.push(tf);
        h.beta.push(beta);
        h.rpd.push(rpd);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_in_range() {
        let a = tvc_series(&[-1.0, -1.2], 10, 0.1, 0.0, 3);
        let b = tvc_series(&[-1.0, -1.2], 10, 0.1, 0.0, 3);
        assert_eq!(a, b);
        assert!(a.multipliers_within(MULTIPLIER_RANGE.0, MULTIPLIER_RANGE.1));
        assert_eq!(drifting_history(50, 1), drifting_history(50, 1));
    }

    #[test]
    fn drift_endpoints() {
        let d = linear_drift(-1.0, -2.0, 24);
        assert_eq!(d.len(), 24);
        assert_eq!(d[0], -1.0);
        assert!((d[23] + 2.0).abs() < 1e-15);
    }
}
