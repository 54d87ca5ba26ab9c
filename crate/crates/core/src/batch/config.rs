use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::BatchError;
use crate::demand::ForecasterSpec;
use crate::elasticity::GroupingConfig;
use crate::market::{
    baseline_price, Cell, Covariates, GridDims, HeuristicRuleSet, MarketGrid, PriceRule, RandomizationConfig,
    RulePredicate,
};
use crate::qp::{CostMode, IndexSet, VarianceMode};

/// World the simulator runs: lattice, fleet, price rules and offer profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_pickup_days: usize,
    pub max_abt: usize,
    pub max_lor: usize,
    /// Fleet per template day; a single value applies to every day.
    pub fleet: Vec<u32>,
    pub rules: Vec<PriceRule>,
    pub cost_per_day: f64,
    /// Ground truth `base + abt_slope * abt + lor_slope * (lor - 1)`.
    pub elasticity_base: f64,
    pub elasticity_abt_slope: f64,
    pub elasticity_lor_slope: f64,
    pub expected_utilization: f64,
    /// Offers per booking day at ABT 0 before the LOR share.
    pub offer_rate: f64,
    pub abt_decay: f64,
    /// Share of offers per LOR, 1-based order.
    pub lor_share: Vec<f64>,
    pub peak_boost: f64,
    pub peak_days: Vec<usize>,
    pub base_cvr: f64,
    pub branch_type: String,
    pub car_group: String,
}

fn rule(lor: u32, peak: Option<bool>, abt: Option<(u32, u32)>, price: f64) -> PriceRule {
    PriceRule { when: RulePredicate { lor: Some((lor, lor)), peak, abt, ..Default::default() }, price }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mut rules = Vec::new();
        for (lor, base) in [(1, 70.0), (2, 130.0), (3, 185.0)] {
            rules.push(rule(lor, None, None, base));
            rules.push(rule(lor, Some(true), None, base * 1.2));
            rules.push(rule(lor, None, Some((0, 1)), base * 1.14));
        }
        Self {
            n_pickup_days: 7,
            max_abt: 7,
            max_lor: 3,
            fleet: vec![1100, 1100, 1100, 1100, 1250, 1350, 1250],
            rules,
            cost_per_day: 18.0,
            elasticity_base: -0.6,
            elasticity_abt_slope: -0.3,
            elasticity_lor_slope: 0.1,
            expected_utilization: 80.0,
            offer_rate: 500.0,
            abt_decay: 0.2,
            lor_share: vec![0.5, 0.3, 0.2],
            peak_boost: 1.3,
            peak_days: vec![4, 5],
            base_cvr: 0.25,
            branch_type: "airport".into(),
            car_group: "compact".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticityConfig {
    /// Booking days per period of the time-varying fit.
    pub tvc_period_days: usize,
    /// Shift class elasticities by the latest time-varying slope minus the pooled slope.
    pub tvc_shift: bool,
    /// Estimates above this are clamped to keep the objective concave.
    pub max_elasticity: f64,
    /// Price with the simulator's true elasticities instead of estimates; a
    /// perfect-information benchmark.
    pub use_true_elasticity: bool,
}

impl Default for ElasticityConfig {
    fn default() -> Self {
        Self { tvc_period_days: 7, tvc_shift: false, max_elasticity: -0.05, use_true_elasticity: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub bounds: (f64, f64),
    /// Utilization band as multiples of the expected utilization.
    pub band: (f64, f64),
    pub lambda: f64,
    pub threshold_c: f64,
    pub affordable_p: f64,
    pub chance_constrained: bool,
    pub cost_mode: CostMode,
    pub variance_mode: VarianceMode,
    pub index_set: IndexSet,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            bounds: (0.85, 1.15),
            band: (0.5, 1.25),
            lambda: 0.0,
            threshold_c: 30.0,
            affordable_p: 0.05,
            chance_constrained: false,
            cost_mode: CostMode::PerBooking,
            variance_mode: VarianceMode::Statistical,
            index_set: IndexSet::FullAbt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub days: usize,
    /// Heuristic-priced history simulated before the first batch day.
    pub warmup_days: usize,
    /// Master seed; replaces the randomization seed.
    pub seed: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { days: 30, warmup_days: 56, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub randomization: RandomizationConfig,
    pub forecaster: ForecasterSpec,
    pub grouping: GroupingConfig,
    pub elasticity: ElasticityConfig,
    pub optimizer: OptimizerConfig,
    pub batch: BatchConfig,
    pub output_dir: PathBuf,
    /// Calendar date of day 0.
    pub epoch: NaiveDate,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            randomization: RandomizationConfig::default(),
            forecaster: ForecasterSpec::default(),
            grouping: GroupingConfig::default(),
            elasticity: ElasticityConfig::default(),
            optimizer: OptimizerConfig::default(),
            batch: BatchConfig::default(),
            output_dir: PathBuf::from("out"),
            epoch: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
        }
    }
}

fn config_error(field: &str, message: impl Into<String>) -> BatchError {
    BatchError::Config { field: field.to_string(), message: message.into() }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Defaults, then the JSON document, then `key.path=value` overrides.
    /// Override values are parsed as JSON and fall back to plain strings.
    pub fn from_parts(json: Option<&str>, overrides: &[String]) -> Result<Self, BatchError> {
        let mut value = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        if let Some(text) = json {
            let patch: Value = serde_json::from_str(text).map_err(|e| config_error("<file>", e.to_string()))?;
            if !patch.is_object() {
                return Err(config_error("<file>", "config must be a JSON object"));
            }
            merge(&mut value, patch);
        }
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| config_error(o, "override must look like key=value"))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut patch = parsed;
            for part in key.split('.').rev() {
                if part.is_empty() {
                    return Err(config_error(key, "empty path segment"));
                }
                patch = Value::Object([(part.to_string(), patch)].into_iter().collect());
            }
            merge(&mut value, patch);
        }
        let cfg = deserialize_with_path(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BatchError> {
        let s = &self.scenario;
        GridDims::new(s.n_pickup_days, s.max_abt, s.max_lor).map_err(|e| config_error("scenario", e.to_string()))?;
        if s.fleet.len() != 1 && s.fleet.len() != s.n_pickup_days {
            return Err(config_error("scenario.fleet", format!("needs 1 or {} entries", s.n_pickup_days)));
        }
        if s.fleet.contains(&0) {
            return Err(config_error("scenario.fleet", "every day needs at least one vehicle"));
        }
        if s.lor_share.len() != s.max_lor || s.lor_share.iter().any(|v| !(*v >= 0.0)) {
            return Err(config_error("scenario.lor_share", format!("needs {} non-negative entries", s.max_lor)));
        }
        if let Some(d) = s.peak_days.iter().find(|d| **d >= s.n_pickup_days) {
            return Err(config_error("scenario.peak_days", format!("day {d} is outside the template")));
        }
        for (field, v) in [
            ("scenario.cost_per_day", s.cost_per_day),
            ("scenario.offer_rate", s.offer_rate),
            ("scenario.abt_decay", s.abt_decay),
            ("scenario.peak_boost", s.peak_boost),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(config_error(field, "must be finite and non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&s.base_cvr) {
            return Err(config_error("scenario.base_cvr", "must lie in [0, 1]"));
        }
        if !(0.0..=100.0).contains(&s.expected_utilization) {
            return Err(config_error("scenario.expected_utilization", "must lie in [0, 100]"));
        }
        let worst = s.elasticity_base
            + (s.max_abt as f64 - 1.0) * s.elasticity_abt_slope.max(0.0)
            + (s.max_lor as f64 - 1.0) * s.elasticity_lor_slope.max(0.0);
        if !(worst < 0.0) {
            return Err(config_error("scenario.elasticity_base", "every class elasticity must be negative"));
        }
        HeuristicRuleSet::new(s.rules.clone()).map_err(|e| config_error("scenario.rules", e.to_string()))?;
        self.randomization.validate().map_err(|e| config_error("randomization", e.to_string()))?;
        if self.forecaster.window == 0 {
            return Err(config_error("forecaster.window", "must be at least 1"));
        }
        let g = &self.grouping;
        if !(g.p_threshold > 0.0 && g.p_threshold <= 1.0) {
            return Err(config_error("grouping.p_threshold", "must lie in (0, 1]"));
        }
        if !(g.var_threshold >= 0.0) || !(g.bin_width > 0.0) {
            return Err(config_error("grouping", "var_threshold must be >= 0 and bin_width > 0"));
        }
        if self.elasticity.tvc_period_days == 0 {
            return Err(config_error("elasticity.tvc_period_days", "must be at least 1"));
        }
        if !(self.elasticity.max_elasticity < 0.0) {
            return Err(config_error("elasticity.max_elasticity", "must be negative"));
        }
        let o = &self.optimizer;
        if !(o.bounds.0 > 0.0 && o.bounds.0 <= o.bounds.1 && o.bounds.1.is_finite()) {
            return Err(config_error("optimizer.bounds", "needs 0 < min <= max"));
        }
        if !(o.band.0 >= 0.0 && o.band.0 <= o.band.1 && o.band.1.is_finite()) {
            return Err(config_error("optimizer.band", "needs 0 <= a <= b"));
        }
        if !(o.lambda >= 0.0) || !o.lambda.is_finite() {
            return Err(config_error("optimizer.lambda", "must be finite and non-negative"));
        }
        if !(o.affordable_p > 0.0 && o.affordable_p < 1.0) {
            return Err(config_error("optimizer.affordable_p", "must lie in (0, 1)"));
        }
        if !o.threshold_c.is_finite() {
            return Err(config_error("optimizer.threshold_c", "must be finite"));
        }
        // the forecaster needs `window` pickup dates whose booking curves are complete
        let need = self.forecaster.window + s.max_abt - 1;
        if self.batch.warmup_days < need {
            return Err(config_error(
                "batch.warmup_days",
                format!("must be at least forecaster.window + max_abt - 1 = {need}"),
            ));
        }
        Ok(())
    }

    /// Randomization with the master seed applied.
    pub fn randomization(&self) -> RandomizationConfig {
        RandomizationConfig { seed: self.batch.seed, ..self.randomization.clone() }
    }

    pub fn build_grid(&self) -> Result<MarketGrid, BatchError> {
        let s = &self.scenario;
        let dims = GridDims::new(s.n_pickup_days, s.max_abt, s.max_lor)?;
        let rules = HeuristicRuleSet::new(s.rules.clone())?;
        let peak: Vec<bool> = (0..s.n_pickup_days).map(|d| s.peak_days.contains(&d)).collect();
        let mut price = Vec::with_capacity(dims.n_cells());
        let mut cost = Vec::with_capacity(dims.n_cells());
        let mut offer_rate = Vec::with_capacity(dims.n_cells());
        for Cell { day, abt, lor } in dims.cells() {
            let cov = Covariates {
                branch_type: s.branch_type.clone(),
                car_group: s.car_group.clone(),
                peak: peak[day],
                lor: lor as u32,
                abt: abt as u32,
            };
            price.push(baseline_price(&rules, &cov)?);
            cost.push(s.cost_per_day * lor as f64);
            let boost = if peak[day] { s.peak_boost } else { 1.0 };
            offer_rate.push(s.offer_rate * (-s.abt_decay * abt as f64).exp() * s.lor_share[lor - 1] * boost);
        }
        let true_elasticity = (0..s.max_abt)
            .flat_map(|abt| {
                (1..=s.max_lor).map(move |lor| {
                    s.elasticity_base
                        + s.elasticity_abt_slope * abt as f64
                        + s.elasticity_lor_slope * (lor as f64 - 1.0)
                })
            })
            .collect();
        let fleet = if s.fleet.len() == 1 { vec![s.fleet[0]; s.n_pickup_days] } else { s.fleet.clone() };
        let grid = MarketGrid {
            dims,
            fleet,
            price,
            cost,
            true_elasticity,
            expected_utilization: s.expected_utilization,
            offer_rate,
            base_cvr: s.base_cvr,
            peak,
            branch_type: s.branch_type.clone(),
            car_group: s.car_group.clone(),
        };
        grid.validate()?;
        Ok(grid)
    }
}

/// Deserializes with the failing field path in the error.
fn deserialize_with_path(value: Value) -> Result<RunConfig, BatchError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner().to_string();
        config_error(&field, inner)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_build() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let g = c.build_grid().unwrap();
        assert_eq!(g.dims.n_cells(), 7 * 7 * 3);
        assert!(g.true_elasticity.iter().all(|e| *e < 0.0));
        assert_eq!(g.true_elasticity[g.dims.class_index(0, 1)], -0.6);
    }

    #[test]
    fn class_order_matches_grid() {
        let g = RunConfig::default().build_grid().unwrap();
        let e = g.true_elasticity[g.dims.class_index(6, 3)];
        assert!((e - (-0.6 - 1.8 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn overrides_and_partial_sections() {
        let c = RunConfig::from_parts(
            Some(r#"{"batch": {"days": 3}, "optimizer": {"lambda": 0.001}}"#),
            &["batch.seed=99".into(), "optimizer.cost_mode=fixed".into(), "output_dir=runs/a".into()],
        )
        .unwrap();
        assert_eq!(c.batch.days, 3);
        assert_eq!(c.batch.warmup_days, 56);
        assert_eq!(c.batch.seed, 99);
        assert_eq!(c.optimizer.cost_mode, CostMode::Fixed);
        assert_eq!(c.output_dir, PathBuf::from("runs/a"));
        assert_eq!(c.randomization().seed, 99);
    }

    #[test]
    fn field_level_errors() {
        let err = RunConfig::from_parts(None, &["optimizer.band=[2.0, 1.0]".into()]).unwrap_err();
        assert!(matches!(&err, BatchError::Config { field, .. } if field == "optimizer.band"), "{err}");
        let err = RunConfig::from_parts(Some(r#"{"batch": {"dayz": 3}}"#), &[]).unwrap_err();
        assert!(matches!(&err, BatchError::Config { field, .. } if field == "batch.dayz"), "{err}");
        let err = RunConfig::from_parts(None, &["scenario.fleet=[1, 2]".into()]).unwrap_err();
        assert!(matches!(&err, BatchError::Config { field, .. } if field == "scenario.fleet"));
    }
}
