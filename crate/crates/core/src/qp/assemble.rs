use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::admm::DenseQp;
use super::model::normal_cdf_approx_inv;
use super::{PricingProblem, QpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "day", rename_all = "snake_case")]
pub enum RowKind {
    UtilizationUpper(usize),
    UtilizationLower(usize),
    RiskUpper(usize),
    RiskLower(usize),
}

/// `sum coeffs . x <= upper` over variable indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IneqRow {
    pub coeffs: Vec<(usize, f64)>,
    pub upper: f64,
    pub kind: RowKind,
}

/// Maximization form `sum q_ii x_i^2 + sum_{a<b} q_ab x_a x_b + q'x + const`
/// over the free cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpStandardForm {
    pub quad_diag: Vec<f64>,
    /// `(a, b, q_ab)` with `a < b`.
    pub quad_off: Vec<(usize, usize, f64)>,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub rows: Vec<IneqRow>,
    pub bounds: Vec<(f64, f64)>,
    /// Variable to cell.
    pub var_index: Vec<usize>,
    /// Cell to variable; `None` for fixed cells.
    pub cell_var: Vec<Option<usize>>,
    /// Value of every cell that is not a variable (others hold their linearization point).
    pub fixed: Vec<f64>,
}

impl QpStandardForm {
    pub fn n_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        let mut f = self.constant;
        for i in 0..v.len() {
            f += self.quad_diag[i] * v[i] * v[i] + self.linear[i] * v[i];
        }
        for &(a, b, q) in &self.quad_off {
            f += q * v[a] * v[b];
        }
        f
    }

    /// Variable vector from per-cell multipliers.
    pub fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.var_index.iter().map(|&c| x[c]).collect()
    }

    /// Per-cell multipliers from a variable vector.
    pub fn scatter(&self, v: &[f64]) -> Vec<f64> {
        self.cell_var.iter().enumerate().map(|(c, var)| var.map_or(self.fixed[c], |i| v[i])).collect()
    }

    /// Minimization form for the inner solver: rows first, then one box row per variable.
    pub(crate) fn to_dense(&self) -> DenseQp {
        let n = self.n_vars();
        let m = self.rows.len() + n;
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            p[(i, i)] = -2.0 * self.quad_diag[i];
        }
        for &(a, b, q) in &self.quad_off {
            p[(a, b)] -= q;
            p[(b, a)] -= q;
        }
        let c = DVector::from_iterator(n, self.linear.iter().map(|v| -v));
        let mut a = DMatrix::zeros(m, n);
        let mut l = DVector::from_element(m, f64::NEG_INFINITY);
        let mut u = DVector::from_element(m, f64::INFINITY);
        for (r, row) in self.rows.iter().enumerate() {
            for &(j, v) in &row.coeffs {
                a[(r, j)] += v;
            }
            u[r] = row.upper;
        }
        for i in 0..n {
            let r = self.rows.len() + i;
            a[(r, i)] = 1.0;
            l[r] = self.bounds[i].0;
            u[r] = self.bounds[i].1;
        }
        DenseQp { p, c, a, l, u }
    }

    /// A row that no point of the box can satisfy.
    pub fn trivially_infeasible_row(&self) -> Option<&IneqRow> {
        self.rows.iter().find(|row| {
            let min: f64 = row
                .coeffs
                .iter()
                .map(|&(j, v)| if v >= 0.0 { v * self.bounds[j].0 } else { v * self.bounds[j].1 })
                .sum();
            min > row.upper + 1e-9 * (1.0 + row.upper.abs())
        })
    }
}

/// Assembles the QP with variance and chance terms linearized at all-ones.
pub fn assemble_qp(problem: &PricingProblem) -> Result<QpStandardForm, QpError> {
    let (lo, hi) = problem.bounds;
    assemble_at(problem, &vec![1.0f64.clamp(lo, hi); problem.n_cells()])
}

/// Assembles the QP with the variance and chance terms linearized at `x0`.
pub fn assemble_at(problem: &PricingProblem, x0: &[f64]) -> Result<QpStandardForm, QpError> {
    problem.validate()?;
    let dims = problem.grid.dims;
    let nc = dims.n_cells();
    let mut cell_var = vec![None; nc];
    let mut var_index = Vec::new();
    let mut fixed = x0.to_vec();
    for c in 0..nc {
        match problem.fixed_value(c) {
            Some(v) => fixed[c] = v,
            None => {
                cell_var[c] = Some(var_index.len());
                var_index.push(c);
            }
        }
    }
    let n = var_index.len();
    let mut quad_diag = vec![0.0; n];
    let mut linear = vec![0.0; n];
    let mut off: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    let mut constant = 0.0;
    let point = |c: usize| cell_var[c].map_or(fixed[c], |_| x0[c]);

    for c in 0..nc {
        let cell = dims.cell(c);
        let (e, _) = problem.elasticity_of(cell);
        let d = problem.forecast.mean[c];
        let p = problem.grid.price[c];
        let (kw, kf) = problem.cost_split(c);
        match cell_var[c] {
            Some(i) => {
                quad_diag[i] += d * p * e;
                linear[i] += d * (p * (1.0 - e) - kw * e);
                constant -= d * (kw * (1.0 - e) + kf);
            }
            None => constant += problem.cell_margin(c, fixed[c]),
        }
    }

    let lambda = problem.risk.lambda;
    if lambda > 0.0 {
        // demand uncertainty: g_c = w (P x - kw) - kf, linearized at x0
        for c in 0..nc {
            let sd = problem.forecast.sd[c];
            if sd == 0.0 {
                continue;
            }
            let (e, _) = problem.elasticity_of(dims.cell(c));
            let p = problem.grid.price[c];
            let (kw, kf) = problem.cost_split(c);
            let x = point(c);
            let g0 = (1.0 - e * (1.0 - x)) * (p * x - kw) - kf;
            let w2 = lambda * sd * sd;
            match cell_var[c] {
                Some(i) => {
                    let slope = e * (p * x - kw) + p * (1.0 - e * (1.0 - x));
                    let icpt = g0 - slope * x;
                    quad_diag[i] -= w2 * slope * slope;
                    linear[i] -= 2.0 * w2 * icpt * slope;
                    constant -= w2 * icpt * icpt;
                }
                None => constant -= w2 * g0 * g0,
            }
        }
        // elasticity uncertainty: h = sum_c -D (1 - x) (P x - kw) per class
        let mut classes: Vec<Vec<usize>> = vec![Vec::new(); dims.n_classes()];
        for (c, cell) in dims.cells().enumerate() {
            classes[dims.class_index(cell.abt, cell.lor)].push(c);
        }
        for (k, cells) in classes.iter().enumerate() {
            let s = problem.elasticity[k].1;
            if s == 0.0 {
                continue;
            }
            let mut h0 = 0.0;
            let mut gam: Vec<(usize, f64)> = Vec::new();
            for &c in cells {
                let d = problem.forecast.mean[c];
                let p = problem.grid.price[c];
                let (kw, _) = problem.cost_split(c);
                let x = point(c);
                let h = -d * (1.0 - x) * (p * x - kw);
                match cell_var[c] {
                    Some(i) => {
                        let g = d * (p * x - kw) - d * p * (1.0 - x);
                        h0 += h - g * x;
                        gam.push((i, g));
                    }
                    None => h0 += h,
                }
            }
            let w2 = lambda * s * s;
            constant -= w2 * h0 * h0;
            for (ai, &(i, gi)) in gam.iter().enumerate() {
                quad_diag[i] -= w2 * gi * gi;
                linear[i] -= 2.0 * w2 * h0 * gi;
                for &(j, gj) in &gam[ai + 1..] {
                    let key = (i.min(j), i.max(j));
                    *off.entry(key).or_default() -= 2.0 * w2 * gi * gj;
                }
            }
        }
        // Second-order terms g g'' and h h'' dropped by the linearization, so the
        // outer loop is a Newton step rather than a fixed-point sweep. Capped so
        // each diagonal keeps at least half of the margin curvature.
        let class_h: Vec<f64> = classes
            .iter()
            .map(|cells| {
                cells
                    .iter()
                    .map(|&c| {
                        let (kw, _) = problem.cost_split(c);
                        -problem.forecast.mean[c] * (1.0 - point(c)) * (problem.grid.price[c] * point(c) - kw)
                    })
                    .sum()
            })
            .collect();
        for (i, &c) in var_index.iter().enumerate() {
            let cell = dims.cell(c);
            let k = dims.class_index(cell.abt, cell.lor);
            let (e, s) = problem.elasticity[k];
            let d = problem.forecast.mean[c];
            let p = problem.grid.price[c];
            let (kw, kf) = problem.cost_split(c);
            let x = x0[c];
            let g0 = (1.0 - e * (1.0 - x)) * (p * x - kw) - kf;
            let sd = problem.forecast.sd[c];
            let curv = sd * sd * g0 * 2.0 * e * p + s * s * class_h[k] * 2.0 * d * p;
            let a = (-lambda * curv).min(-0.5 * d * p * e);
            quad_diag[i] += a;
            linear[i] -= 2.0 * a * x;
            constant += a * x * x;
        }
    }

    for (i, q) in quad_diag.iter().enumerate() {
        if *q > 0.0 {
            return Err(QpError::NonConcave { cell: var_index[i], coefficient: *q });
        }
    }

    let mut rows = Vec::new();
    let u0 = problem.u0();
    let (a_band, b_band) = problem.band;
    let chance = problem.risk.chance_constrained;
    let sds: Vec<f64> = if chance {
        problem.utilization_variance(x0, problem.variance_mode).iter().map(|v| v.max(0.0).sqrt()).collect()
    } else {
        Vec::new()
    };
    let z = normal_cdf_approx_inv(problem.risk.affordable_p);
    for (t, cells) in problem.day_cells().iter().enumerate() {
        let scale = 100.0 / f64::from(problem.grid.fleet[t]);
        let mut k = scale * problem.base_on_rents[t];
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for &c in cells {
            let (e, _) = problem.elasticity_of(dims.cell(c));
            let d = problem.forecast.mean[c];
            match cell_var[c] {
                Some(i) => {
                    k += scale * d * (1.0 - e);
                    if d * e != 0.0 {
                        coeffs.push((i, scale * d * e));
                    }
                }
                None => k += scale * d * (1.0 - e * (1.0 - fixed[c])),
            }
        }
        let neg: Vec<(usize, f64)> = coeffs.iter().map(|&(i, v)| (i, -v)).collect();
        rows.push(IneqRow { coeffs: coeffs.clone(), upper: b_band * u0 - k, kind: RowKind::UtilizationUpper(t) });
        rows.push(IneqRow { coeffs: neg.clone(), upper: k - a_band * u0, kind: RowKind::UtilizationLower(t) });
        if chance {
            // per tail: u <= 100 + sd z and u >= c - sd z, with z = inv(p) < 0 for p < 1/2
            rows.push(IneqRow { coeffs, upper: 100.0 + sds[t] * z - k, kind: RowKind::RiskUpper(t) });
            rows.push(IneqRow {
                coeffs: neg,
                upper: k - (problem.risk.threshold_c - sds[t] * z),
                kind: RowKind::RiskLower(t),
            });
        }
    }

    Ok(QpStandardForm {
        quad_diag,
        quad_off: off.into_iter().filter(|(_, v)| *v != 0.0).map(|((a, b), v)| (a, b, v)).collect(),
        linear,
        constant,
        rows,
        bounds: vec![problem.bounds; n],
        var_index,
        cell_var,
        fixed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::DemandForecast;
    use crate::market::GridDims;
    use crate::qp::problem::tests::random_problem;
    use proptest::prelude::*;

    #[test]
    fn single_cell_coefficients() {
        let mut p = random_problem(1, 1, 1, 1);
        p.forecast = DemandForecast::new(GridDims::new(1, 1, 1).unwrap(), 0, vec![100.0], vec![0.0]);
        p.grid.price = vec![50.0];
        p.grid.cost = vec![0.0];
        p.elasticity = vec![(-2.0, 0.0)];
        let sf = assemble_qp(&p).unwrap();
        assert_eq!(sf.quad_diag, vec![-10000.0]);
        assert_eq!(sf.linear, vec![15000.0]);
        p.elasticity = vec![(0.0, 0.0)];
        assert_eq!(assemble_qp(&p).unwrap().quad_diag, vec![0.0]);
        p.elasticity = vec![(0.5, 0.0)];
        assert!(matches!(assemble_qp(&p), Err(QpError::NonConcave { .. })));
    }

    #[test]
    fn row_counts() {
        let mut p = random_problem(2, 4, 2, 3);
        let sf = assemble_qp(&p).unwrap();
        assert_eq!(sf.rows.len(), 8);
        assert_eq!(sf.rows.iter().filter(|r| matches!(r.kind, RowKind::UtilizationUpper(_))).count(), 4);
        p.risk.chance_constrained = true;
        assert_eq!(assemble_qp(&p).unwrap().rows.len(), 16);
        assert_eq!(sf.var_index.len(), p.n_cells());
    }

    proptest! {
        #[test]
        fn standard_form_matches_objective(seed in 0u64..300, lambda in 0.0..0.01f64) {
            let mut p = random_problem(seed, 3, 2, 2);
            p.risk.lambda = lambda;
            let x0: Vec<f64> = (0..p.n_cells()).map(|i| 0.9 + 0.02 * (i % 7) as f64).collect();
            let sf = assemble_at(&p, &x0).unwrap();
            // exact at the linearization point
            let f = sf.value(&sf.gather(&x0));
            let g = p.objective(&x0);
            prop_assert!((f - g).abs() <= 1e-9 * (1.0 + g.abs()), "{} vs {}", f, g);
            // rows reproduce utilization
            let u = p.utilization(&x0);
            let v = sf.gather(&x0);
            for row in &sf.rows {
                if let RowKind::UtilizationUpper(t) = row.kind {
                    let lhs: f64 = row.coeffs.iter().map(|&(j, c)| c * v[j]).sum();
                    let implied = p.band.1 * p.u0() - row.upper + lhs;
                    prop_assert!((implied - u[t]).abs() < 1e-9);
                }
            }
        }
    }
}
