//! Exact posterior of the random-walk coefficient model
//!
//! ```text
//! y_{t,n} = alpha + beta_t x_{t,n} + e,   e ~ N(0, obs_sd^2)
//! beta_t  = beta_{t-1} + eta,             eta ~ N(0, state_sd^2)
//! ```
//!
//! by Kalman filtering on the state `(alpha, beta_t)` followed by a
//! Rauch-Tung-Striebel smoother. `alpha` is a static state with a diffuse prior,
//! so it is integrated out exactly rather than sampled.

use serde::{Deserialize, Serialize};

use super::{TvcError, TvcSeries};
use crate::stats::logspace;

/// A hyperparameter that is either fixed or chosen by marginal likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hyper {
    Fixed(f64),
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvcOptions {
    /// Prior mean of the first coefficient.
    pub prior_mean: f64,
    /// Prior standard deviation of the first coefficient.
    pub prior_sd: f64,
    pub state_sd: Hyper,
    pub obs_sd: Hyper,
    /// Log-spaced grid size per `Auto` hyperparameter.
    pub grid_points: usize,
}

impl Default for TvcOptions {
    fn default() -> Self {
        Self { prior_mean: -1.0, prior_sd: 10.0, state_sd: Hyper::Auto, obs_sd: Hyper::Auto, grid_points: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvcPosterior {
    pub alpha: f64,
    pub alpha_var: f64,
    /// Smoothed posterior mean of each period's coefficient.
    pub beta_mean: Vec<f64>,
    pub beta_var: Vec<f64>,
    pub obs_sd: f64,
    pub state_sd: f64,
    pub prior_mean: f64,
    pub log_likelihood: f64,
}

type Mat2 = [[f64; 2]; 2];

const ALPHA_PRIOR_SD: f64 = 1e3;

struct Filtered {
    pred_mean: Vec<[f64; 2]>,
    pred_cov: Vec<Mat2>,
    filt_mean: Vec<[f64; 2]>,
    filt_cov: Vec<Mat2>,
    log_likelihood: f64,
}

fn filter(series: &TvcSeries, alpha0: f64, prior_mean: f64, prior_var: f64, q: f64, r: f64) -> Filtered {
    let n = series.len();
    let mut out = Filtered {
        pred_mean: Vec::with_capacity(n),
        pred_cov: Vec::with_capacity(n),
        filt_mean: Vec::with_capacity(n),
        filt_cov: Vec::with_capacity(n),
        log_likelihood: 0.0,
    };
    let mut m = [alpha0, prior_mean];
    let mut p: Mat2 = [[ALPHA_PRIOR_SD * ALPHA_PRIOR_SD, 0.0], [0.0, prior_var]];
    for (t, period) in series.periods.iter().enumerate() {
        if t > 0 {
            p[1][1] += q;
        }
        out.pred_mean.push(m);
        out.pred_cov.push(p);
        for (&x, &y) in period.design.iter().zip(&period.response) {
            let ph = [p[0][0] + x * p[0][1], p[1][0] + x * p[1][1]];
            let s = ph[0] + x * ph[1] + r;
            let v = y - m[0] - x * m[1];
            let k = [ph[0] / s, ph[1] / s];
            m = [m[0] + k[0] * v, m[1] + k[1] * v];
            // Joseph form keeps the covariance symmetric and positive
            let a = [[1.0 - k[0], -k[0] * x], [-k[1], 1.0 - k[1] * x]];
            let ap = mul(&a, &p);
            let mut np = mul(&ap, &transpose(&a));
            for i in 0..2 {
                for j in 0..2 {
                    np[i][j] += k[i] * k[j] * r;
                }
            }
            np[0][1] = 0.5 * (np[0][1] + np[1][0]);
            np[1][0] = np[0][1];
            p = np;
            out.log_likelihood += -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + v * v / s);
        }
        out.filt_mean.push(m);
        out.filt_cov.push(p);
    }
    out
}

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

fn inverse(a: &Mat2) -> Mat2 {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
}

fn smooth(f: &Filtered, q: f64) -> (Vec<[f64; 2]>, Vec<Mat2>) {
    let n = f.filt_mean.len();
    let mut ms = f.filt_mean.clone();
    let mut ps = f.filt_cov.clone();
    for t in (0..n.saturating_sub(1)).rev() {
        if q == 0.0 {
            // frozen random walk: the smoothed state is the final filtered state
            ms[t] = ms[t + 1];
            ps[t] = ps[t + 1];
            continue;
        }
        let j = mul(&f.filt_cov[t], &inverse(&f.pred_cov[t + 1]));
        let dm = [ms[t + 1][0] - f.pred_mean[t + 1][0], ms[t + 1][1] - f.pred_mean[t + 1][1]];
        ms[t] = [
            f.filt_mean[t][0] + j[0][0] * dm[0] + j[0][1] * dm[1],
            f.filt_mean[t][1] + j[1][0] * dm[0] + j[1][1] * dm[1],
        ];
        let mut dp = ps[t + 1];
        for a in 0..2 {
            for b in 0..2 {
                dp[a][b] -= f.pred_cov[t + 1][a][b];
            }
        }
        let corr = mul(&mul(&j, &dp), &transpose(&j));
        for a in 0..2 {
            for b in 0..2 {
                ps[t][a][b] = f.filt_cov[t][a][b] + corr[a][b];
            }
        }
    }
    (ms, ps)
}

/// Residual scale from independent per-period fits, used to centre the
/// observation-noise grid.
fn pooled_residual_sd(series: &TvcSeries) -> f64 {
    let mut ssr = 0.0;
    let mut dof = 0usize;
    for p in &series.periods {
        if let Ok(fit) = crate::elasticity::fit_linear(&p.design, &p.response) {
            ssr += fit.residuals.iter().map(|e| e * e).sum::<f64>();
            dof += p.design.len().saturating_sub(2);
        }
    }
    if dof == 0 {
        let ys: Vec<f64> = series.periods.iter().flat_map(|p| p.response.iter().copied()).collect();
        return crate::stats::sample_variance(&ys).sqrt();
    }
    (ssr / dof as f64).sqrt()
}

pub fn fit_tvc(series: &TvcSeries, prior_mean: f64, state_sd: Hyper, obs_sd: Hyper) -> Result<TvcPosterior, TvcError> {
    fit_tvc_with(series, &TvcOptions { prior_mean, state_sd, obs_sd, ..TvcOptions::default() })
}

pub fn fit_tvc_with(series: &TvcSeries, opts: &TvcOptions) -> Result<TvcPosterior, TvcError> {
    series.validate()?;
    let xs: Vec<f64> = series.periods.iter().flat_map(|p| p.design.iter().copied()).collect();
    if xs.is_empty() || xs.iter().all(|&x| x == xs[0]) {
        return Err(TvcError::SingularInput);
    }
    for (name, h) in [("state_sd", opts.state_sd), ("obs_sd", opts.obs_sd)] {
        if let Hyper::Fixed(v) = h {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(TvcError::InvalidParameter(format!("{name} must be a finite non-negative value")));
            }
        }
    }
    if let Hyper::Fixed(v) = opts.obs_sd {
        if v == 0.0 {
            return Err(TvcError::InvalidParameter("obs_sd must be positive".into()));
        }
    }
    let ys: Vec<f64> = series.periods.iter().flat_map(|p| p.response.iter().copied()).collect();
    let alpha0 = crate::stats::mean(&ys);
    let prior_var = opts.prior_sd * opts.prior_sd;

    let n = opts.grid_points.max(1);
    let state_grid = match opts.state_sd {
        Hyper::Fixed(v) => vec![v],
        Hyper::Auto => logspace(1e-4, 1.0, n),
    };
    let obs_grid = match opts.obs_sd {
        Hyper::Fixed(v) => vec![v],
        Hyper::Auto => {
            let s = pooled_residual_sd(series).max(1e-6);
            logspace(0.2 * s, 5.0 * s, n)
        }
    };
    let mut best: Option<(f64, f64, f64)> = None;
    for &sq in &state_grid {
        for &so in &obs_grid {
            let ll = filter(series, alpha0, opts.prior_mean, prior_var, sq * sq, so * so).log_likelihood;
            if best.is_none_or(|(b, _, _)| ll > b) {
                best = Some((ll, sq, so));
            }
        }
    }
    let (log_likelihood, state_sd, obs_sd) = best.expect("non-empty grid");
    let q = state_sd * state_sd;
    let f = filter(series, alpha0, opts.prior_mean, prior_var, q, obs_sd * obs_sd);
    let (ms, ps) = smooth(&f, q);
    Ok(TvcPosterior {
        alpha: ms[0][0],
        alpha_var: ps[0][0][0].max(0.0),
        beta_mean: ms.iter().map(|m| m[1]).collect(),
        beta_var: ps.iter().map(|p| p[1][1].max(0.0)).collect(),
        obs_sd,
        state_sd,
        prior_mean: opts.prior_mean,
        log_likelihood,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::fit_linear;
    use crate::tvc::synthetic::tvc_series;
    use crate::tvc::{per_period_slopes, TvcPeriod};

    #[test]
    fn frozen_walk_matches_pooled_ols_on_noiseless_data() {
        let betas = vec![-1.4; 10];
        let s = tvc_series(&betas, 20, 0.0, 0.3, 4);
        let post = fit_tvc(&s, -1.0, Hyper::Fixed(0.0), Hyper::Fixed(1e-3)).unwrap();
        for b in &post.beta_mean {
            assert!((b + 1.4).abs() < 1e-6, "{b}");
            assert_eq!(*b, post.beta_mean[0]);
        }
        assert!((post.alpha - 0.3).abs() < 1e-6);
    }

    #[test]
    fn frozen_walk_is_constant_with_noise() {
        let betas: Vec<f64> = (0..12).map(|t| -1.0 - 0.05 * t as f64).collect();
        let s = tvc_series(&betas, 15, 0.05, 0.0, 5);
        let post = fit_tvc(&s, -1.0, Hyper::Fixed(0.0), Hyper::Auto).unwrap();
        assert!(post.beta_mean.iter().all(|b| *b == post.beta_mean[0]));
        // and equals the pooled OLS slope
        let x: Vec<f64> = s.periods.iter().flat_map(|p| p.design.clone()).collect();
        let y: Vec<f64> = s.periods.iter().flat_map(|p| p.response.clone()).collect();
        let pooled = fit_linear(&x, &y).unwrap().slope;
        assert!((post.beta_mean[0] - pooled).abs() < 1e-3);
    }

    #[test]
    fn very_loose_walk_tracks_per_period_slopes() {
        let betas: Vec<f64> = (0..8).map(|t| -1.0 - 0.2 * t as f64).collect();
        let s = tvc_series(&betas, 25, 0.0, 0.5, 6);
        let post = fit_tvc(&s, -1.0, Hyper::Fixed(1e3), Hyper::Fixed(1e-3)).unwrap();
        for (b, ols) in post.beta_mean.iter().zip(per_period_slopes(&s)) {
            assert!((b - ols.unwrap().0).abs() < 1e-3);
        }
    }

    #[test]
    fn more_data_less_variance() {
        let betas = vec![-1.5; 6];
        let big = tvc_series(&betas, 40, 0.05, 0.0, 8);
        let small = TvcSeries::new(
            big.periods
                .iter()
                .map(|p| TvcPeriod {
                    design: p.design[..20].to_vec(),
                    response: p.response[..20].to_vec(),
                    ..p.clone()
                })
                .collect(),
        )
        .unwrap();
        let a = fit_tvc(&big, -1.0, Hyper::Fixed(0.1), Hyper::Fixed(0.05)).unwrap();
        let b = fit_tvc(&small, -1.0, Hyper::Fixed(0.1), Hyper::Fixed(0.05)).unwrap();
        for (va, vb) in a.beta_var.iter().zip(&b.beta_var) {
            assert!(va <= vb);
        }
    }

    #[test]
    fn tracks_linear_drift() {
        let truth = crate::tvc::synthetic::linear_drift(-1.0, -2.0, 24);
        let s = tvc_series(&truth, 30, 0.05, 0.2, 2024);
        let post = fit_tvc(&s, -1.0, Hyper::Auto, Hyper::Auto).unwrap();
        for (b, t) in post.beta_mean.iter().zip(&truth) {
            assert!((b - t).abs() < 0.25, "{b} vs {t}");
        }
        assert!(post.beta_var.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn singular_design_rejected() {
        let p = |t| TvcPeriod { t, design: vec![0.0, 0.0], response: vec![1.0, 1.1], rpd: 1.0 };
        let s = TvcSeries::new(vec![p(0), p(1)]).unwrap();
        assert_eq!(fit_tvc(&s, -1.0, Hyper::Auto, Hyper::Auto), Err(TvcError::SingularInput));
    }
}
