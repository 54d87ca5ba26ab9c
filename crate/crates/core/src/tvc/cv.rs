use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{forecast_elasticity, ElasticityHistory, ForecastConfig, TvcError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFold {
    /// Exclusive end of the training window (the forecast origin).
    pub train_end: usize,
    pub horizon_rmse: f64,
    pub naive_rmse: f64,
    pub static_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<CvFold>,
    pub rmse_model: f64,
    pub rmse_naive_t1: f64,
    pub rmse_static_mean: f64,
}

struct FoldErrors {
    fold: CvFold,
    model: Vec<f64>,
    naive: Vec<f64>,
    stat: Vec<f64>,
}

fn rms(e: &[f64]) -> f64 {
    if e.is_empty() {
        0.0
    } else {
        (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt()
    }
}

/// Rolling-origin evaluation at origins `initial_train + k * step` while the
/// full horizon fits inside the history.
pub fn rolling_cv(
    history: &ElasticityHistory,
    initial_train: usize,
    step: usize,
    horizon: usize,
    config: &ForecastConfig,
) -> Result<CvReport, TvcError> {
    if step == 0 || horizon == 0 {
        return Err(TvcError::InvalidParameter("step and horizon must be positive".into()));
    }
    let n = history.len();
    if n < initial_train + horizon {
        return Err(TvcError::InsufficientHistory { have: n, need: initial_train + horizon });
    }
    let origins: Vec<usize> = (0..).map(|k| initial_train + k * step).take_while(|o| o + horizon <= n).collect();
    let folds: Vec<FoldErrors> = origins
        .par_iter()
        .map(|&o| -> Result<FoldErrors, TvcError> {
            let train = history.slice(0..o);
            let f = forecast_elasticity(&train, &history.rpd[o..o + horizon], horizon, config)?;
            let truth = &history.beta[o..o + horizon];
            let last = train.beta[o - 1];
            let avg = crate::stats::mean(&train.beta);
            let model: Vec<f64> = truth.iter().zip(&f.point).map(|(y, p)| p - y).collect();
            let naive: Vec<f64> = truth.iter().map(|y| last - y).collect();
            let stat: Vec<f64> = truth.iter().map(|y| avg - y).collect();
            Ok(FoldErrors {
                fold: CvFold {
                    train_end: o,
                    horizon_rmse: rms(&model),
                    naive_rmse: rms(&naive),
                    static_rmse: rms(&stat),
                },
                model,
                naive,
                stat,
            })
        })
        .collect::<Result<_, _>>()?;
    let cat = |sel: fn(&FoldErrors) -> &Vec<f64>| -> f64 {
        rms(&folds.iter().flat_map(|f| sel(f).iter().copied()).collect::<Vec<_>>())
    };
    Ok(CvReport {
        rmse_model: cat(|f| &f.model),
        rmse_naive_t1: cat(|f| &f.naive),
        rmse_static_mean: cat(|f| &f.stat),
        folds: folds.into_iter().map(|f| f.fold).collect(),
    })
}
