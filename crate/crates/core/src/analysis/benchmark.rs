use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{aggregate_risk, opportunity_cost, AnalysisError, ChoiceSet};
use crate::fmt::sig9;
use crate::qp::{PricingPolicy, PricingProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub label: String,
    pub expected_margin: f64,
    pub objective: f64,
    /// Sum over cells of `sqrt(sd_demand^2 + sd_elasticity^2)` at the policy.
    pub decision_risk: f64,
    /// Largest two-tailed utilization excursion probability over days.
    pub max_day_risk: f64,
    /// Days with utilization outside the band.
    pub band_violations: usize,
    /// Objective gap to the best policy in the set.
    pub opportunity_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
}

pub fn benchmark(problem: &PricingProblem, policies: &[(String, Vec<f64>)]) -> Result<BenchmarkTable, AnalysisError> {
    problem.validate()?;
    if policies.is_empty() {
        return Err(AnalysisError::InvalidInput("no policies to compare".into()));
    }
    let (lo, hi) = problem.bounds;
    let dims = problem.grid.dims;
    let u0 = problem.u0();
    let mut rows = Vec::with_capacity(policies.len());
    for (label, x) in policies {
        if x.len() != problem.n_cells() || x.iter().any(|v| !(*v >= lo - 1e-12 && *v <= hi + 1e-12)) {
            return Err(AnalysisError::InvalidInput(format!("policy '{label}' is outside the box or misshaped")));
        }
        let pol = PricingPolicy::evaluate(problem, x.clone());
        let decisions: Vec<(f64, f64)> = dims
            .cells()
            .enumerate()
            .map(|(i, c)| {
                let sd_bf = problem.weight(i, x[i]).abs() * problem.forecast.sd[i];
                (sd_bf, problem.elasticity_of(c).1)
            })
            .collect();
        let band_violations = pol
            .utilization
            .iter()
            .filter(|u| **u < problem.band.0 * u0 - 1e-9 || **u > problem.band.1 * u0 + 1e-9)
            .count();
        rows.push(BenchmarkRow {
            label: label.clone(),
            expected_margin: pol.expected_margin,
            objective: pol.objective,
            decision_risk: aggregate_risk(&decisions)?.total,
            max_day_risk: pol.risk_per_day.iter().cloned().fold(0.0, f64::max),
            band_violations,
            opportunity_cost: 0.0,
        });
    }
    let choices = ChoiceSet { choices: rows.iter().map(|r| (r.label.clone(), r.objective)).collect() };
    for (r, oc) in rows.iter_mut().zip(opportunity_cost(&choices)?) {
        r.opportunity_cost = oc;
    }
    Ok(BenchmarkTable { rows })
}

impl BenchmarkTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "label,expected_margin,objective,decision_risk,max_day_risk,band_violations,opportunity_cost\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.label,
                sig9(r.expected_margin),
                sig9(r.objective),
                sig9(r.decision_risk),
                sig9(r.max_day_risk),
                r.band_violations,
                sig9(r.opportunity_cost)
            );
        }
        s
    }

    /// Bars for expected margin per policy with a line for decision risk on a
    /// second axis.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 360.0, 48.0);
        let n = self.rows.len().max(1) as f64;
        let slot = (w - 2.0 * pad) / n;
        let max_m = self.rows.iter().map(|r| r.expected_margin.abs()).fold(0.0, f64::max).max(1e-12);
        let max_r = self.rows.iter().map(|r| r.decision_risk).fold(0.0, f64::max).max(1e-12);
        let plot_h = h - 2.0 * pad;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{pad}" y="20" font-size="13">Expected margin (bars) and decision risk (line)</text>"#
        );
        let base = h - pad;
        let _ = writeln!(s, r#"<line x1="{pad}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, w - pad);
        let mut line = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            let x = pad + slot * i as f64;
            let bh = plot_h * r.expected_margin.abs() / max_m;
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4a7ab5"/>"##,
                x + slot * 0.15,
                base - bh,
                slot * 0.7,
                bh
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                x + slot / 2.0,
                base + 16.0,
                xml_escape(&r.label)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                x + slot / 2.0,
                base - bh - 4.0,
                sig9(r.expected_margin)
            );
            line.push(format!("{:.2},{:.2}", x + slot / 2.0, base - plot_h * r.decision_risk / max_r));
        }
        let _ =
            writeln!(s, r##"<polyline points="{}" fill="none" stroke="#d0542c" stroke-width="2"/>"##, line.join(" "));
        s.push_str("</svg>\n");
        s
    }
}

fn xml_escape(v: &str) -> String {
    v.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
