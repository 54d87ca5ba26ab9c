use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{diagnose, fit_loglog, DiagnosticsReport, OlsError, RegressionResult};
use crate::market::{BookingRecord, Covariates};

/// Covariates the tree can split on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    BranchType,
    CarGroup,
    Peak,
    LorBand,
    AbtBand,
}

impl Feature {
    pub fn name(self) -> &'static str {
        match self {
            Feature::BranchType => "branch_type",
            Feature::CarGroup => "car_group",
            Feature::Peak => "peak",
            Feature::LorBand => "lor_band",
            Feature::AbtBand => "abt_band",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupingConfig {
    /// A child is accepted only if its slope p-value is below this.
    pub p_threshold: f64,
    /// ... and its slope variance (`slope_se^2`) is at most this.
    pub var_threshold: f64,
    /// Split order from the root downwards.
    pub features: Vec<Feature>,
    /// Upper edges of the LOR bands; values above the last edge form a final band.
    pub lor_bands: Vec<u32>,
    /// Upper edges of the ABT bands.
    pub abt_bands: Vec<u32>,
    /// Width of the multiplier bins that records are pooled into before fitting.
    pub bin_width: f64,
    /// Weight of uncertainty in the grouping score.
    pub alpha: f64,
    /// Weight of margin in the grouping score.
    pub beta: f64,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            p_threshold: 0.01,
            var_threshold: 1.0,
            features: vec![Feature::BranchType, Feature::CarGroup, Feature::Peak, Feature::LorBand, Feature::AbtBand],
            lor_bands: vec![2, 5],
            abt_bands: vec![2, 6],
            bin_width: 0.005,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

fn band_label(value: u32, edges: &[u32], first: u32) -> String {
    let mut lo = first;
    for &hi in edges {
        if value <= hi {
            return format!("{lo}-{hi}");
        }
        lo = hi + 1;
    }
    format!("{lo}+")
}

impl GroupingConfig {
    pub fn feature_value(&self, feature: Feature, c: &Covariates) -> String {
        match feature {
            Feature::BranchType => c.branch_type.clone(),
            Feature::CarGroup => c.car_group.clone(),
            Feature::Peak => if c.peak { "peak" } else { "off_peak" }.to_string(),
            Feature::LorBand => band_label(c.lor, &self.lor_bands, 1),
            Feature::AbtBand => band_label(c.abt, &self.abt_bands, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub feature: Feature,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingNode {
    pub feature_path: Vec<PathStep>,
    pub estimate: Option<RegressionResult>,
    pub diagnostics: Option<DiagnosticsReport>,
    pub accepted: bool,
    pub n_records: usize,
    pub children: Vec<GroupingNode>,
}

/// A resolved elasticity with the node it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityEstimate {
    pub slope: f64,
    pub slope_se: f64,
    pub feature_path: Vec<PathStep>,
    pub diagnostics: Option<DiagnosticsReport>,
}

/// Pools records into multiplier bins of width `bin_width` and returns
/// `(mean multiplier, reservations per offer)` for bins with bookings.
pub fn loglog_pairs<'a, I>(records: I, bin_width: f64) -> Vec<(f64, f64)>
where
    I: IntoIterator<Item = &'a BookingRecord>,
{
    let mut bins: BTreeMap<i64, (f64, f64, f64)> = BTreeMap::new();
    for r in records {
        if r.offers == 0 {
            continue;
        }
        let key = (r.offered_multiplier / bin_width).round() as i64;
        let e = bins.entry(key).or_default();
        let offers = r.offers as f64;
        e.0 += r.offered_multiplier * offers;
        e.1 += offers;
        e.2 += r.reservations as f64;
    }
    bins.values()
        .filter(|(_, offers, res)| *offers > 0.0 && *res > 0.0)
        .map(|(weighted, offers, res)| (weighted / offers, res / offers))
        .collect()
}

fn fit_group(
    records: &[&BookingRecord],
    bin_width: f64,
) -> Result<(RegressionResult, Option<DiagnosticsReport>), OlsError> {
    let pairs = loglog_pairs(records.iter().copied(), bin_width);
    let fit = fit_loglog(&pairs)?;
    let design: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let diagnostics = diagnose(&fit, &design).ok();
    Ok((fit, diagnostics))
}

fn is_acceptable(estimate: Option<&RegressionResult>, p_threshold: f64, var_threshold: f64) -> bool {
    estimate.is_some_and(|e| e.slope_pvalue < p_threshold && e.slope_se * e.slope_se <= var_threshold)
}

/// Root node holding the global elasticity fitted on all records.
pub fn global_node(data: &[BookingRecord], config: &GroupingConfig) -> Result<GroupingNode, OlsError> {
    let refs: Vec<&BookingRecord> = data.iter().collect();
    let (fit, diagnostics) = fit_group(&refs, config.bin_width)?;
    Ok(GroupingNode {
        feature_path: Vec::new(),
        estimate: Some(fit),
        diagnostics,
        accepted: true,
        n_records: data.len(),
        children: Vec::new(),
    })
}

/// Depth-first refinement of the grouping tree.
///
/// Children are fitted for the next feature in `config.features`; a child is
/// accepted iff its slope p-value is below `p_threshold` and its slope variance
/// is at most `var_threshold`. Only accepted children are expanded further.
/// Fit failures count as rejections.
pub fn refine_grouping(root: &GroupingNode, data: &[BookingRecord], config: &GroupingConfig) -> GroupingNode {
    let refs: Vec<&BookingRecord> = data.iter().collect();
    let mut out = GroupingNode {
        feature_path: Vec::new(),
        estimate: root.estimate.clone(),
        diagnostics: root.diagnostics.clone(),
        accepted: true,
        n_records: data.len(),
        children: Vec::new(),
    };
    out.children = expand(&[], &refs, config);
    out
}

fn expand(path: &[PathStep], data: &[&BookingRecord], config: &GroupingConfig) -> Vec<GroupingNode> {
    let Some(&feature) = config.features.get(path.len()) else {
        return Vec::new();
    };
    let mut groups: BTreeMap<String, Vec<&BookingRecord>> = BTreeMap::new();
    for r in data {
        groups.entry(config.feature_value(feature, &r.covariates())).or_default().push(r);
    }
    groups
        .into_par_iter()
        .map(|(value, subset)| {
            let mut feature_path = path.to_vec();
            feature_path.push(PathStep { feature, value });
            let (estimate, diagnostics) = match fit_group(&subset, config.bin_width) {
                Ok((fit, diag)) => (Some(fit), diag),
                Err(_) => (None, None),
            };
            let accepted = is_acceptable(estimate.as_ref(), config.p_threshold, config.var_threshold);
            let children = if accepted { expand(&feature_path, &subset, config) } else { Vec::new() };
            GroupingNode { feature_path, estimate, diagnostics, accepted, n_records: subset.len(), children }
        })
        .collect()
}

impl GroupingNode {
    fn to_estimate(&self) -> ElasticityEstimate {
        let e = self.estimate.as_ref().expect("accepted nodes hold an estimate");
        ElasticityEstimate {
            slope: e.slope,
            slope_se: e.slope_se,
            feature_path: self.feature_path.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Estimate of the nearest accepted ancestor-or-self of the node reached by
    /// following child indices `path` from this (accepted) node.
    pub fn fallback_elasticity(&self, path: &[usize]) -> (f64, f64) {
        let e = self.fallback_estimate(path);
        (e.slope, e.slope_se)
    }

    pub fn fallback_estimate(&self, path: &[usize]) -> ElasticityEstimate {
        let mut node = self;
        let mut best = self;
        for &i in path {
            match node.children.get(i) {
                Some(child) => {
                    node = child;
                    if child.accepted && child.estimate.is_some() {
                        best = child;
                    }
                }
                None => break,
            }
        }
        best.to_estimate()
    }

    /// Descends along the covariate values reported by `lookup`, stopping at a
    /// rejected child, an unknown category or a feature the lookup leaves open.
    pub fn resolve(&self, lookup: impl Fn(Feature) -> Option<String>) -> ElasticityEstimate {
        let mut node = self;
        let mut best = self;
        loop {
            let next = node.children.first().and_then(|c| {
                let step = c.feature_path.last()?;
                let value = lookup(step.feature)?;
                node.children.iter().find(|c| c.feature_path.last().is_some_and(|s| s.value == value))
            });
            match next {
                Some(child) if child.accepted && child.estimate.is_some() => {
                    best = child;
                    node = child;
                }
                _ => break,
            }
        }
        best.to_estimate()
    }

    /// Nested JSON export of the tree.
    pub fn to_json(&self) -> Value {
        let est = self.estimate.as_ref();
        json!({
            "feature_path": self.feature_path.iter().map(|s| json!({"feature": s.feature.name(), "value": s.value})).collect::<Vec<_>>(),
            "slope": est.map(|e| e.slope),
            "slope_se": est.map(|e| e.slope_se),
            "p_value": est.map(|e| e.slope_pvalue),
            "accepted": self.accepted,
            "n_records": self.n_records,
            "children": self.children.iter().map(GroupingNode::to_json).collect::<Vec<_>>(),
        })
    }

    pub fn walk(&self, f: &mut impl FnMut(&GroupingNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }
}

/// Grouping score: `alpha * uncertainty - beta * margin` (lower is better).
pub fn score_grouping(uncertainty: f64, margin: f64, alpha: f64, beta: f64) -> f64 {
    alpha * uncertainty - beta * margin
}

/// Uncertainty fed to [`score_grouping`]: slope variance plus demand forecast variance.
pub fn grouping_uncertainty(slope_se: f64, forecast_sd: f64) -> f64 {
    slope_se * slope_se + forecast_sd * forecast_sd
}
