use serde::{Deserialize, Serialize};

use super::{BatchError, RunConfig};
use crate::demand::{fit_forecaster, open_curves, DemandForecast};
use crate::elasticity::{global_node, refine_grouping, Feature, GroupingNode};
use crate::market::{generate_day, generate_history, on_rents, BookingRecord, Covariates, MarketGrid};
use crate::qp::{solve, CostMode, PricingPolicy, PricingProblem, QpError, RiskConfig, SolverReport};
use crate::tvc::{fit_tvc, series_from_records, Hyper, TvcSeries};

/// Everything estimated for one decision day.
#[derive(Debug, Clone)]
pub struct DayPlan {
    pub problem: PricingProblem,
    pub tree: GroupingNode,
    /// Latest smoothed slope of the time-varying fit, if it ran.
    pub tvc_latest: Option<f64>,
    pub events: Vec<String>,
}

fn day_error(day: i64, e: impl std::fmt::Display) -> BatchError {
    BatchError::Day { day, message: e.to_string() }
}

/// Re-fits forecaster and elasticities on records booked before `as_of` and
/// assembles the pricing problem for pickup days `as_of .. as_of + N`.
///
/// Cells already booked (`abt > day`) carry no forecast demand; their actual
/// reservations enter the base on-rents together with earlier rentals still out.
pub fn plan_day(
    config: &RunConfig,
    grid: &MarketGrid,
    records: &[BookingRecord],
    as_of: i64,
) -> Result<DayPlan, BatchError> {
    let history: Vec<BookingRecord> = records.iter().filter(|r| r.booking_day < as_of).cloned().collect();
    let window = grid.rotated(as_of);
    let dims = window.dims;
    let mut events = Vec::new();

    let forecaster = fit_forecaster(&history, &config.forecaster).map_err(|e| day_error(as_of, e))?;
    let curves = open_curves(&history, as_of, dims);
    let mut forecast = forecaster.forecast(&curves, dims, as_of).map_err(|e| day_error(as_of, e))?;
    for (idx, c) in dims.cells().enumerate() {
        if c.abt > c.day {
            forecast.mean[idx] = 0.0;
            forecast.sd[idx] = 0.0;
        }
    }
    let base_on_rents = (0..dims.n_pickup_days).map(|t| on_rents(&history, as_of + t as i64) as f64).collect();

    let root = global_node(&history, &config.grouping).map_err(|e| day_error(as_of, e))?;
    let tree = refine_grouping(&root, &history, &config.grouping);
    let pooled = root.estimate.as_ref().map_or(-1.0, |e| e.slope);
    let tvc_latest = tvc_slope(config, &history, pooled, &mut events);
    let shift = match (config.elasticity.tvc_shift, tvc_latest) {
        (true, Some(b)) => b - pooled,
        _ => 0.0,
    };

    let mut elasticity = Vec::with_capacity(dims.n_classes());
    for abt in 0..dims.max_abt {
        for lor in 1..=dims.max_lor {
            // average over the window's peak flags
            let (mut m, mut s) = (0.0, 0.0);
            for day in 0..dims.n_pickup_days {
                let cov = Covariates {
                    branch_type: window.branch_type.clone(),
                    car_group: window.car_group.clone(),
                    peak: window.peak[day],
                    lor: lor as u32,
                    abt: abt as u32,
                };
                let est = tree.resolve(|f: Feature| Some(config.grouping.feature_value(f, &cov)));
                m += est.slope;
                s += est.slope_se;
            }
            let n = dims.n_pickup_days as f64;
            if config.elasticity.use_true_elasticity {
                elasticity.push((grid.elasticity_at(abt, lor), 0.0));
                continue;
            }
            let mut e = m / n + shift;
            if e > config.elasticity.max_elasticity {
                events.push(format!("elasticity {e:.4} for abt {abt} lor {lor} clamped"));
                e = config.elasticity.max_elasticity;
            }
            elasticity.push((e, s / n));
        }
    }

    let o = &config.optimizer;
    let mut problem = PricingProblem::new(window, forecast, elasticity);
    problem.bounds = o.bounds;
    problem.band = o.band;
    problem.risk = RiskConfig {
        lambda: o.lambda,
        threshold_c: o.threshold_c,
        affordable_p: o.affordable_p,
        chance_constrained: o.chance_constrained,
    };
    problem.cost_mode = o.cost_mode;
    problem.variance_mode = o.variance_mode;
    problem.index_set = o.index_set;
    problem.base_on_rents = base_on_rents;
    problem.validate().map_err(|e| day_error(as_of, e))?;
    Ok(DayPlan { problem, tree, tvc_latest, events })
}

fn tvc_slope(config: &RunConfig, history: &[BookingRecord], pooled: f64, events: &mut Vec<String>) -> Option<f64> {
    let first = history.iter().map(|r| r.booking_day).min()?;
    let periods = series_from_records(history, first, config.elasticity.tvc_period_days, config.grouping.bin_width);
    let fit = TvcSeries::new(periods).and_then(|s| fit_tvc(&s, pooled, Hyper::Auto, Hyper::Auto));
    match fit {
        Ok(post) => post.beta_mean.last().copied(),
        Err(e) => {
            events.push(format!("time-varying fit skipped: {e}"));
            None
        }
    }
}

/// Margin realized by one booking day's records.
pub fn realized_margin(grid: &MarketGrid, records: &[BookingRecord], mode: CostMode) -> f64 {
    records
        .iter()
        .map(|r| {
            let cell = crate::market::Cell {
                day: grid.template_day(r.pickup_day),
                abt: r.abt() as usize,
                lor: r.lor as usize,
            };
            let idx = grid.dims.cell_index(cell);
            let revenue = f64::from(r.reservations) * grid.price[idx] * r.offered_multiplier;
            match mode {
                CostMode::PerBooking => revenue - f64::from(r.reservations) * grid.cost[idx],
                CostMode::Fixed => revenue - grid.cost[idx],
            }
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayOutcome {
    pub day: i64,
    /// `optimal`, `max_iterations` or `fallback`.
    pub status: String,
    pub report: Option<SolverReport>,
    /// Multipliers applied to the day's offers, indexed by `abt * L + lor - 1`.
    pub applied: Vec<f64>,
    pub expected_margin: f64,
    pub realized_margin: f64,
    /// Same day priced at the heuristic (multiplier 1) on common random numbers.
    pub heuristic_margin: f64,
    pub utilization: Vec<f64>,
    pub risk_per_day: Vec<f64>,
    pub tvc_latest: Option<f64>,
    pub events: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BatchState {
    /// Next day to run.
    pub day: i64,
    pub first_day: i64,
    pub records: Vec<BookingRecord>,
    pub tree: Option<GroupingNode>,
    pub forecast: Option<DemandForecast>,
    pub last_problem: Option<PricingProblem>,
    pub last_policy: Option<PricingPolicy>,
    pub history: Vec<DayOutcome>,
}

impl BatchState {
    pub fn cumulative_margin(&self) -> f64 {
        self.history.iter().map(|d| d.realized_margin).sum()
    }

    pub fn cumulative_heuristic_margin(&self) -> f64 {
        self.history.iter().map(|d| d.heuristic_margin).sum()
    }
}

/// Heuristic warm-up history, then the daily loop: plan, solve, price the
/// day's offers and record what was realized.
pub fn run_batch(config: &RunConfig) -> Result<BatchState, BatchError> {
    config.validate()?;
    let grid = config.build_grid()?;
    let rand = config.randomization();
    let records = generate_history(&grid, &rand, config.batch.warmup_days)?;
    let first_day = config.batch.warmup_days as i64;
    let mut state = BatchState {
        day: first_day,
        first_day,
        records,
        tree: None,
        forecast: None,
        last_problem: None,
        last_policy: None,
        history: Vec::new(),
    };
    for _ in 0..config.batch.days {
        step(config, &grid, &mut state)?;
    }
    Ok(state)
}

fn step(config: &RunConfig, grid: &MarketGrid, state: &mut BatchState) -> Result<(), BatchError> {
    let d = state.day;
    let plan = plan_day(config, grid, &state.records, d)?;
    let dims = plan.problem.grid.dims;
    let mut events = plan.events.clone();
    let (policy, report, status) = match solve(&plan.problem) {
        Ok((p, r)) => {
            let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from));
            (p, Some(r), status.unwrap_or_default())
        }
        Err(e @ (QpError::Infeasible(_) | QpError::SearchSpaceTooLarge { .. } | QpError::NonConcave { .. })) => {
            log::warn!("day {d}: {e}; falling back to the heuristic price");
            events.push(format!("fallback to heuristic: {e}"));
            let ones = vec![1.0f64.clamp(plan.problem.bounds.0, plan.problem.bounds.1); plan.problem.n_cells()];
            (PricingPolicy::evaluate(&plan.problem, ones), None, "fallback".to_string())
        }
        Err(e) => return Err(day_error(d, e)),
    };
    let (lo, hi) = plan.problem.bounds;
    let applied: Vec<f64> = (0..dims.max_abt)
        .flat_map(|abt| (1..=dims.max_lor).map(move |lor| (abt, lor)))
        .map(|(abt, lor)| {
            // offers made today for pickup d + abt sit on window day abt
            if abt < dims.n_pickup_days {
                policy.multipliers[dims.cell_index(crate::market::Cell { day: abt, abt, lor })].clamp(lo, hi)
            } else {
                1.0
            }
        })
        .collect();
    let lor_count = dims.max_lor;
    let rand = config.randomization();
    let today = generate_day(grid, &rand, d, &|abt, lor| applied[abt * lor_count + lor - 1]);
    let heuristic = generate_day(grid, &rand, d, &|_, _| 1.0);
    let outcome = DayOutcome {
        day: d,
        status,
        report,
        expected_margin: policy.expected_margin,
        realized_margin: realized_margin(grid, &today, config.optimizer.cost_mode),
        heuristic_margin: realized_margin(grid, &heuristic, config.optimizer.cost_mode),
        applied,
        utilization: policy.utilization.clone(),
        risk_per_day: policy.risk_per_day.clone(),
        tvc_latest: plan.tvc_latest,
        events,
    };
    state.records.extend(today);
    state.tree = Some(plan.tree);
    state.forecast = Some(plan.problem.forecast.clone());
    state.last_problem = Some(plan.problem);
    state.last_policy = Some(policy);
    state.history.push(outcome);
    state.day += 1;
    Ok(())
}
