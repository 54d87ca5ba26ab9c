//! Time-varying elasticity: per-period slopes, exact Gaussian posterior for a
//! random-walk coefficient, basis-function forecasting and rolling-origin
//! cross-validation.

mod cv;
mod forecast;
mod kalman;
mod series;
pub mod synthetic;

pub use cv::{rolling_cv, CvFold, CvReport};
pub use forecast::{forecast_elasticity, ElasticityForecast, ElasticityHistory, ForecastConfig};
pub use kalman::{fit_tvc, fit_tvc_with, Hyper, TvcOptions, TvcPosterior};
pub use series::{per_period_slopes, series_from_records, TvcPeriod, TvcSeries};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TvcError {
    #[error("at least two periods are required (got {0})")]
    TooFewPeriods(usize),
    #[error("period {period}: design has {design} values but response has {response}")]
    LengthMismatch { period: usize, design: usize, response: usize },
    #[error("all design values are identical; the slope is not identified")]
    SingularInput,
    #[error("insufficient history: {have} points, {need} needed")]
    InsufficientHistory { have: usize, need: usize },
    #[error("future regressor values missing: {have} supplied for a horizon of {need}")]
    MissingFutureRegressor { have: usize, need: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
