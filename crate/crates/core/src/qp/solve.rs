use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::admm::{solve_qp, AdmmSettings, InnerStatus};
use super::assemble::assemble_at;
use super::model::{day_risk, demand_response};
use super::{PricingProblem, QpError};
use crate::fmt::sig9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: SolverStatus,
    /// Inner iterations summed over all passes.
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Sequential linearization passes.
    pub outer_loops: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingPolicy {
    pub multipliers: Vec<f64>,
    /// Floored demand response per cell.
    pub expected_demand: Vec<f64>,
    pub cell_margin: Vec<f64>,
    pub expected_margin: f64,
    pub margin_variance: f64,
    pub objective: f64,
    pub utilization: Vec<f64>,
    pub utilization_sd: Vec<f64>,
    pub risk_per_day: Vec<f64>,
}

impl PricingPolicy {
    /// Evaluates fixed multipliers on a problem.
    pub fn evaluate(problem: &PricingProblem, multipliers: Vec<f64>) -> Self {
        let dims = problem.grid.dims;
        let expected_demand = (0..dims.n_cells())
            .map(|c| {
                let (e, _) = problem.elasticity_of(dims.cell(c));
                demand_response(problem.forecast.mean[c], e, multipliers[c]).0
            })
            .collect();
        let cell_margin: Vec<f64> = (0..dims.n_cells()).map(|c| problem.cell_margin(c, multipliers[c])).collect();
        let utilization = problem.utilization(&multipliers);
        let utilization_sd: Vec<f64> = problem
            .utilization_variance(&multipliers, problem.variance_mode)
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect();
        let risk_per_day =
            utilization.iter().zip(&utilization_sd).map(|(u, s)| day_risk(*u, *s, problem.risk.threshold_c)).collect();
        Self {
            expected_margin: problem.margin(&multipliers),
            margin_variance: problem.margin_variance(&multipliers),
            objective: problem.objective(&multipliers),
            expected_demand,
            cell_margin,
            utilization,
            utilization_sd,
            risk_per_day,
            multipliers,
        }
    }

    /// CSV `pickup_day,abt,lor,multiplier,expected_demand,expected_margin` with
    /// 9 significant digits.
    pub fn to_csv(&self, problem: &PricingProblem) -> String {
        let mut s = String::from("pickup_day,abt,lor,multiplier,expected_demand,expected_margin\n");
        for (idx, c) in problem.grid.dims.cells().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                problem.forecast.as_of + c.day as i64,
                c.abt,
                c.lor,
                sig9(self.multipliers[idx]),
                sig9(self.expected_demand[idx]),
                sig9(self.cell_margin[idx])
            ));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub warm_start: Option<Vec<f64>>,
    pub max_outer: usize,
    pub outer_tolerance: f64,
    pub inner: AdmmSettings,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { warm_start: None, max_outer: 20, outer_tolerance: 1e-6, inner: AdmmSettings::default() }
    }
}

pub fn solve(problem: &PricingProblem) -> Result<(PricingPolicy, SolverReport), QpError> {
    solve_with(problem, &SolveOptions::default())
}

/// Sequential QP: variance and chance terms are linearized at the current
/// multipliers and the QP re-solved until the max-norm change drops below the
/// outer tolerance.
pub fn solve_with(problem: &PricingProblem, opts: &SolveOptions) -> Result<(PricingPolicy, SolverReport), QpError> {
    problem.validate()?;
    let (lo, hi) = problem.bounds;
    let mut x: Vec<f64> = match &opts.warm_start {
        Some(w) if w.len() == problem.n_cells() => w.iter().map(|v| v.clamp(lo, hi)).collect(),
        Some(w) => {
            return Err(QpError::InvalidProblem(format!(
                "warm start has {} values for {} cells",
                w.len(),
                problem.n_cells()
            )))
        }
        None => vec![1.0f64.clamp(lo, hi); problem.n_cells()],
    };
    let sequential = problem.risk.lambda > 0.0 || problem.risk.chance_constrained;
    let mut report = SolverReport {
        status: SolverStatus::MaxIterations,
        iterations: 0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        outer_loops: 0,
    };
    let mut converged = false;
    for pass in 1..=opts.max_outer.max(1) {
        let sf = assemble_at(problem, &x)?;
        if let Some(row) = sf.trivially_infeasible_row() {
            return Err(QpError::Infeasible(format!("{:?} cannot be met inside the box", row.kind)));
        }
        report.outer_loops = pass;
        let x_new = if sf.n_vars() == 0 {
            report.primal_residual = 0.0;
            report.dual_residual = 0.0;
            sf.scatter(&[])
        } else {
            let dense = sf.to_dense();
            let start = DVector::from_vec(sf.gather(&x));
            let sol = solve_qp(&dense, &start, &opts.inner);
            report.iterations += sol.iterations;
            report.primal_residual = sol.primal_residual;
            report.dual_residual = sol.dual_residual;
            match sol.status {
                InnerStatus::PrimalInfeasible => {
                    return Err(QpError::Infeasible("constraint rows admit no point in the box".into()))
                }
                InnerStatus::MaxIterations => report.status = SolverStatus::MaxIterations,
                InnerStatus::Solved => report.status = SolverStatus::Optimal,
            }
            let v: Vec<f64> = sol.x.iter().zip(&sf.bounds).map(|(v, (l, h))| v.clamp(*l, *h)).collect();
            sf.scatter(&v)
        };
        let change = x_new.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = x_new;
        if sf.n_vars() == 0 {
            report.status = SolverStatus::Optimal;
        }
        if !sequential || change < opts.outer_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        report.status = SolverStatus::MaxIterations;
    }
    Ok((PricingPolicy::evaluate(problem, x), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::DemandForecast;
    use crate::market::GridDims;
    use crate::qp::problem::tests::random_problem;
    use rand::{Rng, SeedableRng};

    fn single_cell(e: f64) -> PricingProblem {
        let mut p = random_problem(1, 1, 1, 1);
        p.forecast = DemandForecast::new(GridDims::new(1, 1, 1).unwrap(), 0, vec![100.0], vec![0.0]);
        p.grid.price = vec![50.0];
        p.grid.cost = vec![0.0];
        p.elasticity = vec![(e, 0.0)];
        p
    }

    #[test]
    fn analytic_vertex_and_corner() {
        let (pol, rep) = solve(&single_cell(-1.2)).unwrap();
        assert_eq!(rep.status, SolverStatus::Optimal);
        assert!((pol.multipliers[0] - 2.2 / 2.4).abs() < 1e-6);
        let (pol, _) = solve(&single_cell(-2.0)).unwrap();
        assert_eq!(pol.multipliers[0], 0.85);
    }

    #[test]
    fn baseline_policy_identity() {
        let p = random_problem(9, 3, 2, 2);
        let pol = PricingPolicy::evaluate(&p, vec![1.0; p.n_cells()]);
        assert_eq!(pol.expected_demand, p.forecast.mean);
    }

    #[test]
    fn respects_binding_band() {
        for seed in 0..5 {
            let mut p = random_problem(seed, 3, 2, 2);
            let u1 = p.utilization(&vec![1.0; p.n_cells()]);
            let peak = u1.iter().cloned().fold(0.0, f64::max);
            // force the cap below the unconstrained peak
            p.band = (0.0, 0.97 * peak / p.u0());
            let (pol, rep) = solve(&p).unwrap();
            assert_eq!(rep.status, SolverStatus::Optimal, "seed {seed}");
            assert!(pol.utilization.iter().all(|u| *u <= 0.97 * peak + 1e-6));
            assert!(rep.primal_residual <= 1e-8 && rep.dual_residual <= 1e-8);
        }
    }

    #[test]
    fn unique_maximizer_from_random_starts() {
        let mut p = random_problem(21, 3, 3, 2);
        let peak = p.utilization(&vec![1.0; p.n_cells()]).into_iter().fold(0.0, f64::max);
        p.band = (0.0, 0.95 * peak / p.u0());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut sols = Vec::new();
        for _ in 0..2 {
            let w: Vec<f64> = (0..p.n_cells()).map(|_| rng.random_range(0.85..1.15)).collect();
            let opts = SolveOptions { warm_start: Some(w), ..Default::default() };
            sols.push(solve_with(&p, &opts).unwrap().0.multipliers);
        }
        for (a, b) in sols[0].iter().zip(&sols[1]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn lambda_ladder_reduces_variance() {
        let p0 = random_problem(33, 3, 2, 2);
        let mut last = f64::INFINITY;
        for lambda in [0.0, 1e-4, 1e-3, 1e-2, 1e-1] {
            let mut p = p0.clone();
            p.risk.lambda = lambda;
            let (pol, rep) = solve(&p).unwrap();
            assert_eq!(rep.status, SolverStatus::Optimal, "lambda {lambda} {rep:?}");
            assert!(pol.margin_variance <= last * (1.0 + 1e-9), "lambda {lambda}: {} > {last}", pol.margin_variance);
            last = pol.margin_variance;
        }
    }

    #[test]
    fn chance_constraint_caps_upper_tail() {
        let mut p = single_cell(-1.0);
        p.grid.fleet = vec![100];
        p.forecast = DemandForecast::new(GridDims::new(1, 1, 1).unwrap(), 0, vec![99.0], vec![6.0]);
        p.risk = crate::qp::RiskConfig { lambda: 0.0, threshold_c: 10.0, affordable_p: 0.05, chance_constrained: true };
        let (pol, rep) = solve(&p).unwrap();
        assert_eq!(rep.status, SolverStatus::Optimal);
        let upper = 1.0 - crate::qp::normal_cdf_approx((100.0 - pol.utilization[0]) / pol.utilization_sd[0]);
        assert!((upper - 0.05).abs() < 1e-6, "{upper}");
    }

    #[test]
    fn infeasible_band() {
        let mut p = random_problem(4, 2, 2, 2);
        p.band = (5.0, 6.0);
        assert!(matches!(solve(&p), Err(QpError::Infeasible(_))));
    }
}
