use serde::{Deserialize, Serialize};

use super::MarketError;

/// Covariates describing a booking or a lattice cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Covariates {
    pub branch_type: String,
    pub car_group: String,
    pub peak: bool,
    pub lor: u32,
    pub abt: u32,
}

/// Conjunction of optional conditions; an empty predicate matches everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RulePredicate {
    pub branch_type: Option<String>,
    pub car_group: Option<String>,
    pub peak: Option<bool>,
    /// Inclusive LOR range.
    pub lor: Option<(u32, u32)>,
    /// Inclusive ABT range.
    pub abt: Option<(u32, u32)>,
}

impl RulePredicate {
    pub fn matches(&self, c: &Covariates) -> bool {
        let in_range = |r: &Option<(u32, u32)>, v: u32| r.is_none_or(|(lo, hi)| lo <= v && v <= hi);
        self.branch_type.as_ref().is_none_or(|b| *b == c.branch_type)
            && self.car_group.as_ref().is_none_or(|g| *g == c.car_group)
            && self.peak.is_none_or(|p| p == c.peak)
            && in_range(&self.lor, c.lor)
            && in_range(&self.abt, c.abt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRule {
    #[serde(default)]
    pub when: RulePredicate,
    pub price: f64,
}

/// The pricing heuristics whose mean defines the baseline price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PriceRule>", into = "Vec<PriceRule>")]
pub struct HeuristicRuleSet {
    rules: Vec<PriceRule>,
}

impl HeuristicRuleSet {
    pub fn new(rules: Vec<PriceRule>) -> Result<Self, MarketError> {
        if rules.is_empty() {
            return Err(MarketError::InvalidRules("at least one rule is required".into()));
        }
        if let Some(r) = rules.iter().find(|r| !(r.price > 0.0) || !r.price.is_finite()) {
            return Err(MarketError::InvalidRules(format!("rule price {} is not positive", r.price)));
        }
        Ok(Self { rules })
    }

    pub fn rules(&self) -> &[PriceRule] {
        &self.rules
    }
}

impl TryFrom<Vec<PriceRule>> for HeuristicRuleSet {
    type Error = MarketError;

    fn try_from(rules: Vec<PriceRule>) -> Result<Self, Self::Error> {
        Self::new(rules)
    }
}

impl From<HeuristicRuleSet> for Vec<PriceRule> {
    fn from(set: HeuristicRuleSet) -> Self {
        set.rules
    }
}

/// Baseline price: the arithmetic mean of the prices of every matching rule.
pub fn baseline_price(rules: &HeuristicRuleSet, covariates: &Covariates) -> Result<f64, MarketError> {
    let (sum, n) =
        rules.rules.iter().filter(|r| r.when.matches(covariates)).fold((0.0, 0usize), |(s, n), r| (s + r.price, n + 1));
    if n == 0 {
        return Err(MarketError::NoMatchingRule);
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cov(peak: bool) -> Covariates {
        Covariates { branch_type: "airport".into(), car_group: "compact".into(), peak, lor: 3, abt: 5 }
    }

    fn rule(price: f64, when: RulePredicate) -> PriceRule {
        PriceRule { when, price }
    }

    #[test]
    fn identical_prices_give_that_price() {
        let rules = HeuristicRuleSet::new(vec![
            rule(100.0, RulePredicate::default()),
            rule(100.0, RulePredicate { peak: Some(true), ..Default::default() }),
        ])
        .unwrap();
        assert_eq!(baseline_price(&rules, &cov(true)).unwrap(), 100.0);
        assert_eq!(baseline_price(&rules, &cov(false)).unwrap(), 100.0);
    }

    #[test]
    fn mean_of_matching_rules() {
        let rules = HeuristicRuleSet::new(vec![
            rule(100.0, RulePredicate::default()),
            rule(120.0, RulePredicate { branch_type: Some("airport".into()), ..Default::default() }),
            rule(80.0, RulePredicate { lor: Some((2, 4)), ..Default::default() }),
            rule(500.0, RulePredicate { car_group: Some("luxury".into()), ..Default::default() }),
        ])
        .unwrap();
        assert_eq!(baseline_price(&rules, &cov(false)).unwrap(), 100.0);
    }

    #[test]
    fn no_match_is_an_error() {
        let rules =
            HeuristicRuleSet::new(vec![rule(90.0, RulePredicate { abt: Some((10, 20)), ..Default::default() })])
                .unwrap();
        assert_eq!(baseline_price(&rules, &cov(false)), Err(MarketError::NoMatchingRule));
    }

    #[test]
    fn empty_or_nonpositive_rules_rejected() {
        assert!(HeuristicRuleSet::new(vec![]).is_err());
        assert!(HeuristicRuleSet::new(vec![rule(0.0, RulePredicate::default())]).is_err());
    }

    proptest! {
        #[test]
        fn baseline_price_ignores_rule_order(prices in prop::collection::vec(1.0f64..500.0, 1..12), rot in 0usize..12) {
            let rules: Vec<_> = prices.iter().enumerate().map(|(i, &p)| rule(p, RulePredicate {
                peak: if i % 3 == 2 { Some(false) } else { None },
                ..Default::default()
            })).collect();
            let mut shuffled = rules.clone();
            shuffled.rotate_left(rot % rules.len());
            shuffled.reverse();
            let a = baseline_price(&HeuristicRuleSet::new(rules).unwrap(), &cov(false)).unwrap();
            let b = baseline_price(&HeuristicRuleSet::new(shuffled).unwrap(), &cov(false)).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }
}
