use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::TvcError;

/// Per-period elasticity estimates with the revenue-per-day regressor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ElasticityHistory {
    pub t: Vec<f64>,
    pub beta: Vec<f64>,
    pub rpd: Vec<f64>,
}

impl ElasticityHistory {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            t: self.t[range.clone()].to_vec(),
            beta: self.beta[range.clone()].to_vec(),
            rpd: self.rpd[range].to_vec(),
        }
    }

    fn validate(&self) -> Result<(), TvcError> {
        if self.t.len() != self.beta.len() || self.rpd.len() != self.beta.len() {
            return Err(TvcError::InvalidParameter(format!(
                "history columns differ in length: t {}, beta {}, rpd {}",
                self.t.len(),
                self.beta.len(),
                self.rpd.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    /// Number of sin/cos pairs.
    pub seasonality_order: usize,
    /// Cycle length in periods.
    pub season_length: f64,
    /// Period indices flagged by the holiday indicator.
    pub holidays: Vec<f64>,
    pub use_regressor: bool,
    /// Ridge penalty on the standardized basis, relative to the sample size.
    pub ridge: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self { seasonality_order: 3, season_length: 12.0, holidays: Vec::new(), use_regressor: true, ridge: 1e-6 }
    }
}

impl ForecastConfig {
    /// Basis size including the intercept.
    pub fn n_basis(&self) -> usize {
        2 + 2 * self.seasonality_order + usize::from(!self.holidays.is_empty()) + usize::from(self.use_regressor)
    }

    fn is_holiday(&self, t: f64) -> f64 {
        if self.holidays.iter().any(|h| (h - t).abs() < 0.5) {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityForecast {
    pub horizon: usize,
    pub t: Vec<f64>,
    pub point: Vec<f64>,
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub holiday: Vec<f64>,
    pub regressor_effect: Vec<f64>,
    pub regressor_coef: f64,
    pub resid_sd: f64,
}

impl ElasticityForecast {
    /// CSV with header `period,point,trend,seasonal,holiday,regressor_effect`.
    pub fn to_csv(&self) -> String {
        use crate::fmt::fixed6;
        let mut s = String::from("period,point,trend,seasonal,holiday,regressor_effect\n");
        for i in 0..self.horizon {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.t[i],
                fixed6(self.point[i]),
                fixed6(self.trend[i]),
                fixed6(self.seasonal[i]),
                fixed6(self.holiday[i]),
                fixed6(self.regressor_effect[i])
            ));
        }
        s
    }
}

/// Basis columns in component order: trend slope, seasonal pairs, holiday, regressor.
fn row(t: f64, rpd: f64, cfg: &ForecastConfig) -> Vec<f64> {
    let mut r = vec![t];
    for k in 1..=cfg.seasonality_order {
        let w = 2.0 * std::f64::consts::PI * k as f64 * t / cfg.season_length;
        r.push(w.sin());
        r.push(w.cos());
    }
    if !cfg.holidays.is_empty() {
        r.push(cfg.is_holiday(t));
    }
    if cfg.use_regressor {
        r.push(rpd);
    }
    r
}

/// Fits `beta ~ [1, t, fourier, holiday, rpd]` and extends it `horizon`
/// unit-spaced periods past the last history point.
pub fn forecast_elasticity(
    history: &ElasticityHistory,
    future_rpd: &[f64],
    horizon: usize,
    config: &ForecastConfig,
) -> Result<ElasticityForecast, TvcError> {
    history.validate()?;
    if !(config.season_length > 0.0) || !(config.ridge >= 0.0) {
        return Err(TvcError::InvalidParameter("season_length must be positive and ridge non-negative".into()));
    }
    let n = history.len();
    let need = 2 * config.n_basis();
    if n < need {
        return Err(TvcError::InsufficientHistory { have: n, need });
    }
    if config.use_regressor && future_rpd.len() < horizon {
        return Err(TvcError::MissingFutureRegressor { have: future_rpd.len(), need: horizon });
    }

    let rows: Vec<Vec<f64>> = (0..n).map(|i| row(history.t[i], history.rpd[i], config)).collect();
    let p = rows[0].len();
    let mut mean = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for j in 0..p {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        mean[j] = crate::stats::mean(&col);
        sd[j] = (col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n as f64).sqrt();
    }
    // constant columns are absorbed by the intercept
    let active: Vec<usize> = (0..p).filter(|&j| sd[j] > 1e-12 * (1.0 + mean[j].abs())).collect();
    let ybar = crate::stats::mean(&history.beta);
    let mut coef = vec![0.0; p];
    if !active.is_empty() {
        let z = DMatrix::from_fn(n, active.len(), |i, a| {
            let j = active[a];
            (rows[i][j] - mean[j]) / sd[j]
        });
        let y = DVector::from_iterator(n, history.beta.iter().map(|b| b - ybar));
        let mut a = z.transpose() * &z;
        for d in 0..active.len() {
            a[(d, d)] += config.ridge * n as f64;
        }
        let rhs = z.transpose() * y;
        let b = match a.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => a.svd(true, true).solve(&rhs, 1e-12).map_err(|e| TvcError::InvalidParameter(e.to_string()))?,
        };
        for (a_idx, &j) in active.iter().enumerate() {
            coef[j] = b[a_idx] / sd[j];
        }
    }
    let intercept = ybar - (0..p).map(|j| coef[j] * mean[j]).sum::<f64>();

    let split = |r: &[f64]| -> [f64; 4] {
        let trend = intercept + coef[0] * r[0];
        let seas: f64 = (1..1 + 2 * config.seasonality_order).map(|j| coef[j] * r[j]).sum();
        let mut j = 1 + 2 * config.seasonality_order;
        let hol = if config.holidays.is_empty() {
            0.0
        } else {
            j += 1;
            coef[j - 1] * r[j - 1]
        };
        let reg = if config.use_regressor { coef[j] * r[j] } else { 0.0 };
        [trend, seas, hol, reg]
    };

    let fitted_resid: Vec<f64> =
        rows.iter().zip(&history.beta).map(|(r, b)| b - split(r).iter().sum::<f64>()).collect();
    let dof = n.saturating_sub(1 + active.len()).max(1);
    let resid_sd = (fitted_resid.iter().map(|e| e * e).sum::<f64>() / dof as f64).sqrt();

    let last_t = history.t[n - 1];
    let mut out = ElasticityForecast {
        horizon,
        t: Vec::with_capacity(horizon),
        point: Vec::with_capacity(horizon),
        trend: Vec::with_capacity(horizon),
        seasonal: Vec::with_capacity(horizon),
        holiday: Vec::with_capacity(horizon),
        regressor_effect: Vec::with_capacity(horizon),
        regressor_coef: if config.use_regressor { coef[p - 1] } else { 0.0 },
        resid_sd,
    };
    for h in 0..horizon {
        let t = last_t + (h + 1) as f64;
        let rpd = future_rpd.get(h).copied().unwrap_or(0.0);
        let [g, s, hol, reg] = split(&row(t, rpd, config));
        out.t.push(t);
        out.trend.push(g);
        out.seasonal.push(s);
        out.holiday.push(hol);
        out.regressor_effect.push(reg);
        out.point.push(g + s + hol + reg);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hist(beta: impl Fn(f64) -> f64, rpd: impl Fn(f64) -> f64, n: usize) -> ElasticityHistory {
        let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
        ElasticityHistory { beta: t.iter().map(|&x| beta(x)).collect(), rpd: t.iter().map(|&x| rpd(x)).collect(), t }
    }

    #[test]
    fn constant_history_constant_forecast() {
        let h = hist(|_| -1.3, |_| 100.0, 30);
        let f = forecast_elasticity(&h, &[100.0; 5], 5, &ForecastConfig::default()).unwrap();
        for p in &f.point {
            assert!((p + 1.3).abs() < 1e-9, "{p}");
        }
    }

    #[test]
    fn linear_history_extrapolates_exactly() {
        let cfg = ForecastConfig { seasonality_order: 0, use_regressor: false, ridge: 0.0, ..Default::default() };
        let h = hist(|t| -1.0 - 0.02 * t, |_| 0.0, 20);
        let f = forecast_elasticity(&h, &[], 6, &cfg).unwrap();
        for (t, p) in f.t.iter().zip(&f.point) {
            assert!((p - (-1.0 - 0.02 * t)).abs() < 1e-10);
        }
    }

    #[test]
    fn regressor_coefficient_recovered() {
        let rpd = |t: f64| 100.0 + 10.0 * (0.7 * t).sin() + 3.0 * (1.9 * t).cos();
        let h = hist(|t| -0.012 * rpd(t), rpd, 60);
        let cfg = ForecastConfig { seasonality_order: 0, ..Default::default() };
        let f = forecast_elasticity(&h, &[100.0; 3], 3, &cfg).unwrap();
        assert!((f.regressor_coef + 0.012).abs() < 1e-5, "{}", f.regressor_coef);
        let slope = (f.trend[1] - f.trend[0]).abs();
        assert!(slope < 1e-6);
    }

    #[test]
    fn errors() {
        let h = hist(|_| -1.0, |_| 1.0, 10);
        assert_eq!(
            forecast_elasticity(&h, &[1.0], 1, &ForecastConfig::default()),
            Err(TvcError::InsufficientHistory { have: 10, need: 18 })
        );
        let h = hist(|_| -1.0, |_| 1.0, 40);
        assert_eq!(
            forecast_elasticity(&h, &[1.0], 3, &ForecastConfig::default()),
            Err(TvcError::MissingFutureRegressor { have: 1, need: 3 })
        );
    }

    #[test]
    fn holiday_effect_isolated() {
        let cfg = ForecastConfig {
            seasonality_order: 0,
            use_regressor: false,
            holidays: vec![5.0, 12.0, 19.0, 26.0, 33.0],
            ridge: 0.0,
            ..Default::default()
        };
        let h = hist(|t| if [5.0, 12.0, 19.0, 26.0].contains(&t) { -1.5 } else { -1.0 }, |_| 0.0, 30);
        let f = forecast_elasticity(&h, &[], 5, &cfg).unwrap();
        assert!((f.point[3] + 1.5).abs() < 1e-9);
        assert!((f.point[0] + 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn components_sum_to_point(seed in 0u64..500, order in 0usize..4, h in 1usize..10) {
            let hst = crate::tvc::synthetic::drifting_history(60, seed);
            let cfg = ForecastConfig { seasonality_order: order, season_length: 7.0, holidays: vec![10.0, 62.0], ..Default::default() };
            let fut: Vec<f64> = (0..h).map(|i| 95.0 + i as f64).collect();
            let f = forecast_elasticity(&hst, &fut, h, &cfg).unwrap();
            for i in 0..h {
                prop_assert_eq!(f.point[i], f.trend[i] + f.seasonal[i] + f.holiday[i] + f.regressor_effect[i]);
            }
            prop_assert!(f.resid_sd >= 0.0);
        }
    }
}
