use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::qp::{solve, solve_with, PricingPolicy, PricingProblem, SolveOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetCounterfactual {
    /// Objective with the fleet rows in place.
    pub constrained_margin: f64,
    /// Objective with utilization and chance rows removed.
    pub unconstrained_margin: f64,
    /// Peak daily on-rents of the constrained policy.
    pub n_constrained: f64,
    /// Peak daily on-rents of the unconstrained policy.
    pub n_optimal: f64,
    pub oc_per_vehicle: f64,
    /// Set when the two peaks coincide; `oc_per_vehicle` is then 0.
    pub zero_delta_n: bool,
    pub constrained: PricingPolicy,
    pub unconstrained: PricingPolicy,
}

fn peak_on_rents(problem: &PricingProblem, policy: &PricingPolicy) -> f64 {
    policy
        .utilization
        .iter()
        .zip(&problem.grid.fleet)
        .map(|(u, f)| u * f64::from(*f) / 100.0)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Value of fleet flexibility: margin gained per extra vehicle when the
/// utilization rows are lifted.
pub fn fleet_opportunity_cost(problem: &PricingProblem) -> Result<FleetCounterfactual, AnalysisError> {
    let (constrained, _) = solve(problem)?;
    let mut relaxed = problem.clone();
    relaxed.band = (0.0, f64::INFINITY);
    relaxed.risk.chance_constrained = false;
    let opts = SolveOptions { warm_start: Some(constrained.multipliers.clone()), ..Default::default() };
    let (candidate, _) = solve_with(&relaxed, &opts)?;
    // The constrained optimum is feasible for the relaxation, so keep it unless
    // the relaxed solve beats it by more than solver noise.
    let noise = 1e-9 * constrained.objective.abs().max(1.0);
    let unconstrained = if candidate.objective > constrained.objective + noise {
        candidate
    } else {
        PricingPolicy::evaluate(&relaxed, constrained.multipliers.clone())
    };
    let n_constrained = peak_on_rents(problem, &constrained);
    let n_optimal = peak_on_rents(&relaxed, &unconstrained);
    let (pc, pu) = (constrained.objective, unconstrained.objective);
    let dn = n_optimal - n_constrained;
    let zero_delta_n = dn.abs() <= 1e-9 * n_constrained.abs().max(1.0);
    Ok(FleetCounterfactual {
        constrained_margin: pc,
        unconstrained_margin: pu,
        n_constrained,
        n_optimal,
        oc_per_vehicle: if zero_delta_n { 0.0 } else { (pu - pc) / dn },
        zero_delta_n,
        constrained,
        unconstrained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::problem::tests::random_problem;
    use crate::qp::solve;

    #[test]
    fn slack_capacity_gives_zero_delta() {
        let p = random_problem(3, 3, 2, 2);
        let fc = fleet_opportunity_cost(&p).unwrap();
        assert_eq!(fc.unconstrained_margin, fc.constrained_margin);
        assert!(fc.zero_delta_n);
        assert_eq!(fc.oc_per_vehicle, 0.0);
    }

    #[test]
    fn binding_capacity_prices_vehicles() {
        for seed in 0..8 {
            let mut p = random_problem(seed, 3, 2, 2);
            // with a uniform fleet the utilization peak and the vehicle peak share a day
            p.grid.fleet = vec![60; 3];
            // cap below the peak of the unconstrained optimum so the rows bind
            let (free, _) = solve(&p).unwrap();
            let peak = free.utilization.iter().cloned().fold(0.0, f64::max);
            p.band = (0.0, 0.9 * peak / p.u0());
            let fc = fleet_opportunity_cost(&p).unwrap();
            assert!(fc.unconstrained_margin >= fc.constrained_margin);
            assert!(!fc.zero_delta_n);
            let dn = fc.n_optimal - fc.n_constrained;
            assert!(dn > 0.0);
            let expect = (fc.unconstrained_margin - fc.constrained_margin) / dn;
            assert!((fc.oc_per_vehicle - expect).abs() <= 1e-9 * expect.abs().max(1.0));
        }
    }
}
