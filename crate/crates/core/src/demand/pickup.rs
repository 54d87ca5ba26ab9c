use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{BookingCurve, DemandError, DemandForecast};
use crate::market::{BookingRecord, GridDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterKind {
    PickupAdditive,
    PickupMultiplicative,
    SeasonalNaive,
}

/// Forecaster selection. Recognised options: `season` (seasonal lag in days,
/// default 7) and `min_offers` (offers needed before a class gets its own
/// conversion rate, default 50).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterSpec {
    pub kind: ForecasterKind,
    /// Number of most recent complete pickup dates to learn from.
    pub window: usize,
    #[serde(default)]
    pub options: BTreeMap<String, f64>,
}

impl Default for ForecasterSpec {
    fn default() -> Self {
        Self { kind: ForecasterKind::PickupAdditive, window: 28, options: BTreeMap::new() }
    }
}

impl ForecasterSpec {
    fn option(&self, key: &str, default: f64) -> f64 {
        self.options.get(key).copied().unwrap_or(default)
    }
}

/// Per-`(lor, abt)` table, `lor` 1-based.
#[derive(Debug, Clone, PartialEq)]
struct Profile(Vec<Vec<f64>>);

impl Profile {
    fn get(&self, lor: u32, abt: usize) -> f64 {
        self.0[lor as usize - 1][abt]
    }
}

#[derive(Debug, Clone)]
pub struct Forecaster {
    pub spec: ForecasterSpec,
    pub max_abt: usize,
    pub max_lor: usize,
    first_day: i64,
    last_day: i64,
    inc_mean: Profile,
    inc_sd: Profile,
    ratio: Vec<Vec<Option<f64>>>,
    ratio_sd: Profile,
    seasonal_sd: Profile,
    pooled_mean: Vec<f64>,
    pooled_sd: Vec<f64>,
    offers: HashMap<(i64, u32, usize), f64>,
    cvr: Profile,
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        0.0
    } else {
        crate::stats::sample_variance(xs).max(0.0).sqrt()
    }
}

/// Learns increment, ratio and seasonal profiles from the last `window`
/// complete pickup dates, plus baseline conversion rates per `(lor, abt)` class.
pub fn fit_forecaster(history: &[BookingRecord], spec: &ForecasterSpec) -> Result<Forecaster, DemandError> {
    if spec.window == 0 {
        return Err(DemandError::InvalidSpec("window must be at least 1".into()));
    }
    let season = spec.option("season", 7.0);
    if !(season >= 1.0) || season.fract() != 0.0 {
        return Err(DemandError::InvalidSpec("season must be a positive whole number of days".into()));
    }
    let valid: Vec<&BookingRecord> = history.iter().filter(|r| r.abt() >= 0).collect();
    if valid.is_empty() {
        return Err(DemandError::InsufficientHistory { have: 0, need: spec.window });
    }
    let max_abt = valid.iter().map(|r| r.abt() as usize).max().unwrap_or(0) + 1;
    let max_lor = valid.iter().map(|r| r.lor as usize).max().unwrap_or(1).max(1);
    let first_day = valid.iter().map(|r| r.booking_day).min().unwrap_or(0);
    let last_day = valid.iter().map(|r| r.booking_day).max().unwrap_or(0);

    let mut offers: HashMap<(i64, u32, usize), f64> = HashMap::new();
    let mut lor_seen = vec![false; max_lor];
    for r in &valid {
        *offers.entry((r.pickup_day, r.lor, r.abt() as usize)).or_default() += f64::from(r.offers);
        lor_seen[r.lor as usize - 1] = true;
    }

    let first_complete = first_day + max_abt as i64 - 1;
    let have = (last_day - first_complete + 1).max(0) as usize;
    if have < spec.window {
        return Err(DemandError::InsufficientHistory { have, need: spec.window });
    }
    let train: Vec<i64> = (last_day - spec.window as i64 + 1..=last_day).collect();
    let inc = |p: i64, lor: u32, abt: usize| offers.get(&(p, lor, abt)).copied().unwrap_or(0.0);

    let mut inc_mean = vec![vec![0.0; max_abt]; max_lor];
    let mut inc_sd = vec![vec![0.0; max_abt]; max_lor];
    let mut ratio = vec![vec![None; max_abt]; max_lor];
    let mut ratio_sd = vec![vec![0.0; max_abt]; max_lor];
    let mut seasonal_sd = vec![vec![0.0; max_abt]; max_lor];
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); max_abt];
    let lag = season as i64;
    for lor in 1..=max_lor as u32 {
        let li = lor as usize - 1;
        // cumulative[p][abt] on the training curves
        let cum: Vec<Vec<f64>> = train
            .iter()
            .map(|&p| {
                let mut c = vec![0.0; max_abt];
                let mut total = 0.0;
                for abt in (0..max_abt).rev() {
                    total += inc(p, lor, abt);
                    c[abt] = total;
                }
                c
            })
            .collect();
        for abt in 0..max_abt {
            let xs: Vec<f64> = train.iter().map(|&p| inc(p, lor, abt)).collect();
            if lor_seen[li] {
                pooled[abt].extend(&xs);
            }
            inc_mean[li][abt] = crate::stats::mean(&xs);
            inc_sd[li][abt] = sample_sd(&xs);

            if abt + 1 < max_abt {
                let rs: Vec<f64> = cum.iter().filter(|c| c[abt + 1] > 0.0).map(|c| c[abt] / c[abt + 1]).collect();
                if !rs.is_empty() {
                    let r = crate::stats::mean(&rs);
                    ratio[li][abt] = Some(r);
                    let res: Vec<f64> = cum.iter().map(|c| (c[abt] - c[abt + 1]) - c[abt + 1] * (r - 1.0)).collect();
                    ratio_sd[li][abt] = sample_sd(&res);
                }
            } else {
                ratio_sd[li][abt] = inc_sd[li][abt];
            }

            let res: Vec<f64> = train
                .iter()
                .filter(|&&p| p - lag - (abt as i64) >= first_day)
                .map(|&p| inc(p, lor, abt) - inc(p - lag, lor, abt))
                .collect();
            seasonal_sd[li][abt] = if res.is_empty() {
                inc_sd[li][abt]
            } else {
                (res.iter().map(|e| e * e).sum::<f64>() / res.len() as f64).sqrt()
            };
        }
    }
    let pooled_mean: Vec<f64> = pooled.iter().map(|xs| crate::stats::mean(xs)).collect();
    let pooled_sd: Vec<f64> = pooled.iter().map(|xs| sample_sd(xs)).collect();
    for (li, seen) in lor_seen.iter().enumerate() {
        if !seen {
            inc_mean[li].clone_from(&pooled_mean);
            inc_sd[li].clone_from(&pooled_sd);
            ratio_sd[li].clone_from(&pooled_sd);
            seasonal_sd[li].clone_from(&pooled_sd);
        }
    }

    let cvr = estimate_cvr(&valid, max_abt, max_lor, spec.option("min_offers", 50.0))?;
    Ok(Forecaster {
        spec: spec.clone(),
        max_abt,
        max_lor,
        first_day,
        last_day,
        inc_mean: Profile(inc_mean),
        inc_sd: Profile(inc_sd),
        ratio,
        ratio_sd: Profile(ratio_sd),
        seasonal_sd: Profile(seasonal_sd),
        pooled_mean,
        pooled_sd,
        offers,
        cvr: Profile(cvr),
    })
}

/// Reservations per offer on baseline-priced records, per class with fallback
/// to the LOR pool and then the global pool.
fn estimate_cvr(
    records: &[&BookingRecord],
    max_abt: usize,
    max_lor: usize,
    min_offers: f64,
) -> Result<Vec<Vec<f64>>, DemandError> {
    let mut base: Vec<&&BookingRecord> = records.iter().filter(|r| r.offered_multiplier == 1.0).collect();
    if base.iter().all(|r| r.offers == 0) {
        // no baseline-priced evidence: fall back to all records
        base = records.iter().collect();
    }
    let mut class = vec![vec![(0.0, 0.0); max_abt]; max_lor];
    let mut by_lor = vec![(0.0, 0.0); max_lor];
    let mut global = (0.0, 0.0);
    for r in base {
        let (o, s) = (f64::from(r.offers), f64::from(r.reservations));
        let li = r.lor as usize - 1;
        let c = &mut class[li][r.abt() as usize];
        c.0 += o;
        c.1 += s;
        by_lor[li].0 += o;
        by_lor[li].1 += s;
        global.0 += o;
        global.1 += s;
    }
    if global.0 == 0.0 {
        return Err(DemandError::InsufficientHistory { have: 0, need: 1 });
    }
    let g = global.1 / global.0;
    Ok(class
        .iter()
        .zip(&by_lor)
        .map(|(row, lo)| {
            row.iter()
                .map(|c| {
                    if c.0 >= min_offers && c.0 > 0.0 {
                        c.1 / c.0
                    } else if lo.0 >= min_offers && lo.0 > 0.0 {
                        lo.1 / lo.0
                    } else {
                        g
                    }
                })
                .collect()
        })
        .collect())
}

impl Forecaster {
    /// Baseline conversion rate of a `(lor, abt)` class.
    pub fn base_cvr(&self, abt: usize, lor: u32) -> f64 {
        if lor as usize <= self.max_lor {
            self.cvr.get(lor, abt)
        } else {
            let col: Vec<f64> = (1..=self.max_lor as u32).map(|l| self.cvr.get(l, abt)).collect();
            crate::stats::mean(&col)
        }
    }

    fn mean_inc(&self, lor: u32, abt: usize) -> (f64, f64) {
        if lor as usize <= self.max_lor {
            (self.inc_mean.get(lor, abt), self.inc_sd.get(lor, abt))
        } else {
            (self.pooled_mean[abt], self.pooled_sd[abt])
        }
    }

    fn seasonal_ref(&self, pickup_day: i64, lor: u32, abt: usize) -> Option<f64> {
        let lag = self.spec.option("season", 7.0) as i64;
        let mut p = pickup_day - lag;
        while p - abt as i64 >= self.first_day {
            if p - abt as i64 <= self.last_day {
                return Some(self.offers.get(&(p, lor, abt)).copied().unwrap_or(0.0));
            }
            p -= lag;
        }
        None
    }

    /// Offer increments per ABT (index = abt) with their sds; observed points of
    /// the curve have sd 0.
    pub fn project_increments(&self, curve: &BookingCurve) -> Result<Vec<(f64, f64)>, DemandError> {
        let m = self.max_abt;
        if curve.cumulative.len() > m {
            return Err(DemandError::CurveTooLong {
                pickup_day: curve.pickup_day,
                len: curve.cumulative.len(),
                max_abt: m,
            });
        }
        let lor = curve.lor;
        let observed = curve.increments();
        let n_obs = observed.len();
        let mut out = vec![(0.0, 0.0); m];
        let mut cum = curve.cumulative.last().copied().unwrap_or(0.0);
        for abt in (0..m).rev() {
            let pos = m - 1 - abt;
            let (mut v, sd) = if pos < n_obs {
                (observed[pos], 0.0)
            } else {
                let (mi, si) = self.mean_inc(lor, abt);
                let known = (lor as usize) <= self.max_lor;
                match self.spec.kind {
                    ForecasterKind::PickupAdditive => (mi, si),
                    ForecasterKind::PickupMultiplicative => match (known, abt + 1 < m, cum > 0.0) {
                        (true, true, true) => match self.ratio[lor as usize - 1][abt] {
                            Some(r) => (cum * (r - 1.0), self.ratio_sd.get(lor, abt)),
                            None => (mi, si),
                        },
                        _ => (mi, si),
                    },
                    ForecasterKind::SeasonalNaive => match (known, self.seasonal_ref(curve.pickup_day, lor, abt)) {
                        (true, Some(x)) => (x, self.seasonal_sd.get(lor, abt)),
                        _ => (mi, si),
                    },
                }
            };
            if v < 0.0 {
                log::warn!("negative increment {v} at pickup {} abt {abt} clipped to 0", curve.pickup_day);
                v = 0.0;
            }
            if pos >= n_obs {
                cum += v;
            }
            out[abt] = (v, sd);
        }
        Ok(out)
    }

    /// Full cumulative curve (observed prefix then forecast), in the curve's order.
    pub fn project_curve(&self, curve: &BookingCurve) -> Result<Vec<f64>, DemandError> {
        let inc = self.project_increments(curve)?;
        let mut total = 0.0;
        Ok((0..self.max_abt)
            .rev()
            .map(|abt| {
                total += inc[abt].0;
                total
            })
            .collect())
    }

    /// Per-cell baseline reservations for pickup days `as_of .. as_of + N`.
    /// Missing curves are treated as empty.
    pub fn forecast(&self, open: &[BookingCurve], dims: GridDims, as_of: i64) -> Result<DemandForecast, DemandError> {
        if dims.max_abt != self.max_abt {
            return Err(DemandError::DimensionMismatch { needed: dims.max_abt, learned: self.max_abt });
        }
        let mut by_key: HashMap<(i64, u32), &BookingCurve> = HashMap::new();
        for c in open {
            if c.pickup_day < as_of
                || c.pickup_day >= as_of + dims.n_pickup_days as i64
                || c.lor == 0
                || c.lor as usize > dims.max_lor
            {
                return Err(DemandError::UnknownPickupDate(c.pickup_day));
            }
            by_key.insert((c.pickup_day, c.lor), c);
        }
        let mut mean = vec![0.0; dims.n_cells()];
        let mut sd = vec![0.0; dims.n_cells()];
        for day in 0..dims.n_pickup_days {
            let p = as_of + day as i64;
            for lor in 1..=dims.max_lor {
                let empty = BookingCurve { pickup_day: p, lor: lor as u32, cumulative: Vec::new() };
                let curve = by_key.get(&(p, lor as u32)).copied().unwrap_or(&empty);
                let inc = self.project_increments(curve)?;
                for (abt, (v, s)) in inc.into_iter().enumerate() {
                    let idx = dims.cell_index(crate::market::Cell { day, abt, lor });
                    let cvr = self.base_cvr(abt, lor as u32);
                    mean[idx] = v * cvr;
                    sd[idx] = s * cvr;
                }
            }
        }
        Ok(DemandForecast::new(dims, as_of, mean, sd))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One record per `(booking_day, pickup, lor)` with `offers = f(pickup, abt)`
    /// and reservations at a fixed 20% rate.
    fn history(days: std::ops::Range<i64>, m: usize, lors: u32, f: impl Fn(i64, usize) -> u32) -> Vec<BookingRecord> {
        let mut out = Vec::new();
        for d in days {
            for abt in 0..m {
                for lor in 1..=lors {
                    let offers = f(d + abt as i64, abt);
                    out.push(BookingRecord {
                        booking_day: d,
                        pickup_day: d + abt as i64,
                        lor,
                        offered_multiplier: 1.0,
                        offers,
                        reservations: offers / 5,
                        revenue_per_day: 0.0,
                        branch_type: "b".into(),
                        car_group: "c".into(),
                        peak: false,
                    });
                }
            }
        }
        out
    }

    fn spec(kind: ForecasterKind, window: usize) -> ForecasterSpec {
        ForecasterSpec { kind, window, options: BTreeMap::new() }
    }

    #[test]
    fn repeating_curves_forecast_exactly_with_zero_sd() {
        let h = history(0..30, 4, 2, |_, abt| 10 * (abt as u32 + 1));
        for kind in
            [ForecasterKind::PickupAdditive, ForecasterKind::PickupMultiplicative, ForecasterKind::SeasonalNaive]
        {
            let f = fit_forecaster(&h, &spec(kind, 10)).unwrap();
            let dims = GridDims::new(3, 4, 2).unwrap();
            let fc = f.forecast(&[], dims, 30).unwrap();
            assert!(fc.sd.iter().all(|s| *s == 0.0), "{kind:?}");
            for (idx, c) in dims.cells().enumerate() {
                assert!((fc.mean[idx] - 10.0 * (c.abt as f64 + 1.0) * 0.2).abs() < 1e-12, "{kind:?}");
            }
        }
    }

    #[test]
    fn additive_profile_accumulates() {
        // +2 offers per booking day at every ABT
        let h = history(0..20, 8, 1, |_, _| 2);
        let f = fit_forecaster(&h, &spec(ForecasterKind::PickupAdditive, 5)).unwrap();
        // observed ABT 7..=5 (3 booking days) with cumulative 6
        let curve = BookingCurve { pickup_day: 30, lor: 1, cumulative: vec![2.0, 4.0, 6.0] };
        let proj = f.project_curve(&curve).unwrap();
        // at ABT 0 (position 7): 6 + 5 * 2
        assert_eq!(proj[7], 16.0);
        // five more steps from ABT 5 reach ABT 0; the value at ABT 5 is observed
        assert_eq!(proj[2], 6.0);
        assert_eq!(proj[2 + 5], 6.0 + 10.0);
    }

    #[test]
    fn multiplicative_ratio_profile() {
        // cumulative doubles each step toward pickup: increments 1,1,2,4 at ABT 3..0
        let h = history(0..20, 4, 1, |_, abt| [4, 2, 1, 1][abt]);
        let f = fit_forecaster(&h, &spec(ForecasterKind::PickupMultiplicative, 6)).unwrap();
        for abt in 0..3 {
            assert_eq!(f.ratio[0][abt], Some(2.0));
        }
        let proj = f.project_curve(&BookingCurve { pickup_day: 40, lor: 1, cumulative: vec![3.0] }).unwrap();
        assert_eq!(proj, vec![3.0, 6.0, 12.0, 24.0]);
    }

    #[test]
    fn seasonal_naive_copies_last_season() {
        let h = history(0..40, 3, 1, |p, abt| 5 * ((p % 7) as u32 + abt as u32));
        let f = fit_forecaster(&h, &spec(ForecasterKind::SeasonalNaive, 7)).unwrap();
        let dims = GridDims::new(5, 3, 1).unwrap();
        let fc = f.forecast(&[], dims, 45).unwrap();
        for (idx, c) in dims.cells().enumerate() {
            let p = 45 + c.day as i64;
            let want = (p % 7) as f64 + c.abt as f64;
            assert!((fc.mean[idx] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn complete_curve_returns_observation() {
        let h = history(0..20, 3, 1, |p, _| (p % 3) as u32 + 1);
        let f = fit_forecaster(&h, &spec(ForecasterKind::PickupAdditive, 5)).unwrap();
        let curve = BookingCurve { pickup_day: 21, lor: 1, cumulative: vec![5.0, 9.0, 10.0] };
        let inc = f.project_increments(&curve).unwrap();
        assert_eq!(inc, vec![(1.0, 0.0), (4.0, 0.0), (5.0, 0.0)]);
        assert_eq!(f.project_curve(&curve).unwrap(), curve.cumulative);
    }

    #[test]
    fn translation_consistency() {
        let base = |p: i64, abt: usize| ((p * 7 + abt as i64 * 3) % 5) as u32 + 1;
        let k = 9;
        let h0 = history(0..30, 4, 1, base);
        let h1 = history(0..30, 4, 1, |p, abt| base(p, abt) + if abt == 3 { k } else { 0 });
        let f0 = fit_forecaster(&h0, &spec(ForecasterKind::PickupAdditive, 10)).unwrap();
        let f1 = fit_forecaster(&h1, &spec(ForecasterKind::PickupAdditive, 10)).unwrap();
        for cum in [vec![], vec![2.0], vec![2.0, 5.0]] {
            let c0 = BookingCurve { pickup_day: 31, lor: 1, cumulative: cum.clone() };
            let c1 = BookingCurve { pickup_day: 31, lor: 1, cumulative: cum.iter().map(|v| v + k as f64).collect() };
            let p0 = f0.project_curve(&c0).unwrap();
            let p1 = f1.project_curve(&c1).unwrap();
            for (a, b) in p0.iter().zip(&p1) {
                assert!((b - a - k as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_is_sum_of_cells() {
        let h = history(0..30, 4, 2, |p, abt| ((p + abt as i64) % 4) as u32 + 3);
        let f = fit_forecaster(&h, &spec(ForecasterKind::PickupMultiplicative, 10)).unwrap();
        let dims = GridDims::new(4, 4, 2).unwrap();
        let fc = f.forecast(&[], dims, 30).unwrap();
        assert_eq!(fc.total(), fc.mean.iter().sum::<f64>());
        assert!(fc.is_valid());
    }

    #[test]
    fn errors() {
        let h = history(0..5, 4, 1, |_, _| 1);
        assert_eq!(
            fit_forecaster(&h, &spec(ForecasterKind::PickupAdditive, 3)).unwrap_err(),
            DemandError::InsufficientHistory { have: 2, need: 3 }
        );
        let f = fit_forecaster(&h, &spec(ForecasterKind::PickupAdditive, 2)).unwrap();
        let dims = GridDims::new(2, 4, 1).unwrap();
        let bad = BookingCurve { pickup_day: 99, lor: 1, cumulative: vec![] };
        assert_eq!(f.forecast(&[bad], dims, 10).unwrap_err(), DemandError::UnknownPickupDate(99));
        assert!(matches!(
            f.forecast(&[], GridDims::new(2, 3, 1).unwrap(), 10),
            Err(DemandError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn noisy_simulation_recovers_offer_rate_and_cvr() {
        let grid = crate::market::grid::tests::small_grid();
        let rand = crate::market::RandomizationConfig::default();
        let h = crate::market::generate_history(&grid, &rand, 200).unwrap();
        let f = fit_forecaster(&h, &ForecasterSpec { window: 150, ..Default::default() }).unwrap();
        let fc = f.forecast(&[], grid.dims, 200).unwrap();
        for (m, s) in fc.mean.iter().zip(&fc.sd) {
            // truth: 40 offers * 0.25
            assert!((m - 10.0).abs() < 1.0, "{m}");
            assert!(*s > 0.0);
        }
    }
}
