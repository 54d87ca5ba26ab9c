use serde::{Deserialize, Serialize};

use super::{fit_linear, OlsError, RegressionResult};
use crate::stats::chi2_sf;

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;
const MIN_OBSERVATIONS: usize = 8;

/// Residual checks for the OLS assumptions that matter for inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub breusch_pagan_pvalue: f64,
    pub jarque_bera_pvalue: f64,
    pub passes_homoscedasticity: bool,
    pub passes_normality: bool,
    pub significance_threshold: f64,
}

pub fn diagnose(result: &RegressionResult, design: &[f64]) -> Result<DiagnosticsReport, OlsError> {
    diagnose_with(result, design, DEFAULT_SIGNIFICANCE)
}

/// Breusch-Pagan (studentized, `n R^2` of squared residuals on the design) and
/// Jarque-Bera tests on the fit's residuals.
pub fn diagnose_with(
    result: &RegressionResult,
    design: &[f64],
    significance_threshold: f64,
) -> Result<DiagnosticsReport, OlsError> {
    let e = &result.residuals;
    if e.len() != design.len() {
        return Err(OlsError::LengthMismatch { design: design.len(), response: e.len() });
    }
    let n = e.len();
    if n < MIN_OBSERVATIONS {
        return Err(OlsError::TooFewObservations { n, min: MIN_OBSERVATIONS });
    }
    let breusch_pagan_pvalue = breusch_pagan(e, design);
    let jarque_bera_pvalue = jarque_bera(e);
    Ok(DiagnosticsReport {
        breusch_pagan_pvalue,
        jarque_bera_pvalue,
        passes_homoscedasticity: breusch_pagan_pvalue > significance_threshold,
        passes_normality: jarque_bera_pvalue > significance_threshold,
        significance_threshold,
    })
}

fn breusch_pagan(residuals: &[f64], design: &[f64]) -> f64 {
    let sq: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    if sq.iter().all(|&v| v == 0.0) {
        return 1.0;
    }
    match fit_linear(design, &sq) {
        Ok(aux) => chi2_sf(residuals.len() as f64 * aux.r_squared, 1.0),
        // constant design: no variation to explain heteroscedasticity with
        Err(_) => 1.0,
    }
}

fn jarque_bera(residuals: &[f64]) -> f64 {
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let moment = |k: i32| residuals.iter().map(|e| (e - mean).powi(k)).sum::<f64>() / n;
    let m2 = moment(2);
    if m2 <= 0.0 {
        return 1.0;
    }
    let skew = moment(3) / m2.powf(1.5);
    let kurt = moment(4) / (m2 * m2);
    let jb = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    chi2_sf(jb, 2.0)
}
