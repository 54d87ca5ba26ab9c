use serde::{Deserialize, Serialize};

use super::OlsError;
use crate::stats::t_two_sided_pvalue;

/// Ordinary least squares fit of `y = intercept + slope * x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub intercept: f64,
    /// In a log-log fit this is the elasticity.
    pub slope: f64,
    pub slope_se: f64,
    /// Two-sided t-test p-value of the slope; 1.0 when the fit is saturated.
    pub slope_pvalue: f64,
    pub r_squared: f64,
    pub n: usize,
    /// Residuals in input order.
    pub residuals: Vec<f64>,
}

/// Simple linear regression with intercept.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<RegressionResult, OlsError> {
    if x.len() != y.len() {
        return Err(OlsError::LengthMismatch { design: x.len(), response: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(OlsError::DegenerateDesign);
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 || x.iter().all(|v| *v == x[0]) {
        return Err(OlsError::DegenerateDesign);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let sst: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 1.0 };
    let df = n - 2;
    let (slope_se, slope_pvalue) = if df == 0 {
        (0.0, 1.0)
    } else {
        let se = (ssr / df as f64 / sxx).sqrt();
        let p = if se > 0.0 {
            t_two_sided_pvalue(slope / se, df as f64)
        } else if slope == 0.0 {
            1.0
        } else {
            0.0
        };
        (se, p)
    };
    Ok(RegressionResult { intercept, slope, slope_se, slope_pvalue, r_squared, n, residuals })
}

/// Log-log OLS: `ln(quantity) = b0 + b1 ln(multiplier)`.
pub fn fit_loglog(pairs: &[(f64, f64)]) -> Result<RegressionResult, OlsError> {
    if let Some(index) = pairs.iter().position(|&(m, q)| !(m > 0.0) || !(q > 0.0)) {
        return Err(OlsError::NonPositiveData { index });
    }
    let first = pairs.first().map(|p| p.0);
    if pairs.len() < 2 || pairs.iter().all(|p| Some(p.0) == first) {
        return Err(OlsError::DegenerateDesign);
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    fit_linear(&x, &y)
}
