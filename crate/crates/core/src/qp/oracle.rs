//! Lattice oracle for the pricing QP.
//!
//! Small lattices are enumerated point by point. Larger risk-neutral problems
//! without chance rows use an exact dynamic program: the objective is
//! separable per cell and every cell enters the utilization of a contiguous
//! interval of days, so cells sharing an interval collapse into one list of
//! `(demand contribution, best margin)` pairs and days are swept in order
//! carrying only the partial sums of intervals that are still open.

use std::collections::HashMap;

use super::{PricingProblem, QpError};

/// Lattice size above which point enumeration is refused.
pub const EXHAUSTIVE_LIMIT: f64 = 1e8;
/// Cap on elementary DP steps.
pub const DP_WORK_LIMIT: f64 = 4e9;
const SPLIT_ABOVE: usize = 1 << 17;
const GROUP_LIMIT: usize = 1 << 22;
/// Band slack in percent points.
const FEAS_TOL: f64 = 1e-9;

/// Best lattice point `lo + k * step` (clipped to the upper bound) by exact
/// objective among points meeting the band and, when enabled, the chance
/// constraints. Locked and inert cells stay at their fixed value.
pub fn brute_force_oracle(problem: &PricingProblem, step: f64) -> Result<(Vec<f64>, f64), QpError> {
    problem.validate()?;
    if !(step > 0.0) {
        return Err(QpError::InvalidProblem(format!("step {step} must be positive")));
    }
    let lattices = cell_lattices(problem, step);
    let points: f64 = lattices.iter().map(|l| l.len() as f64).product();
    if points <= EXHAUSTIVE_LIMIT {
        return exhaustive(problem, &lattices);
    }
    if problem.risk.lambda > 0.0 || problem.risk.chance_constrained {
        return Err(QpError::SearchSpaceTooLarge { work: points, limit: EXHAUSTIVE_LIMIT });
    }
    interval_dp(problem, &lattices)
}

fn cell_lattices(problem: &PricingProblem, step: f64) -> Vec<Vec<f64>> {
    let (lo, hi) = problem.bounds;
    let k = ((hi - lo) / step + 1e-9).floor() as usize;
    let full: Vec<f64> = (0..=k).map(|i| (lo + i as f64 * step).min(hi)).collect();
    (0..problem.n_cells())
        .map(|c| match problem.fixed_value(c) {
            Some(v) => vec![v],
            None => full.clone(),
        })
        .collect()
}

fn exhaustive(problem: &PricingProblem, lattices: &[Vec<f64>]) -> Result<(Vec<f64>, f64), QpError> {
    let n = lattices.len();
    let mut idx = vec![0usize; n];
    let mut x: Vec<f64> = lattices.iter().map(|l| l[0]).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        if problem.is_feasible(&x, FEAS_TOL) {
            let f = problem.objective(&x);
            if best.as_ref().is_none_or(|(_, b)| f > *b) {
                best = Some((x.clone(), f));
            }
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == n {
                return best.ok_or_else(|| QpError::Infeasible("no lattice point meets the constraints".into()));
            }
            idx[pos] += 1;
            if idx[pos] < lattices[pos].len() {
                x[pos] = lattices[pos][idx[pos]];
                break;
            }
            idx[pos] = 0;
            x[pos] = lattices[pos][0];
            pos += 1;
        }
    }
}

/// Distinct contribution sums of a cell group with the best margin and the
/// lattice choice reaching it.
struct ValueList {
    cells: Vec<usize>,
    sums: Vec<f64>,
    best: Vec<f64>,
    /// Mixed-radix lattice indices over `cells`.
    combo: Vec<u64>,
}

impl ValueList {
    fn build(cells: Vec<usize>, lattices: &[Vec<f64>], problem: &PricingProblem) -> Self {
        let mut sums = vec![0.0];
        let mut best = vec![0.0];
        let mut combo = vec![0u64];
        let mut radix = 1u64;
        for &c in &cells {
            let d = problem.forecast.mean[c];
            let opts: Vec<(f64, f64)> =
                lattices[c].iter().map(|&x| (d * problem.weight(c, x), problem.cell_margin(c, x))).collect();
            let mut seen: HashMap<u64, usize> = HashMap::with_capacity(sums.len() * opts.len());
            let (mut ns, mut nb, mut nc) = (Vec::new(), Vec::new(), Vec::new());
            for i in 0..sums.len() {
                for (k, &(s, f)) in opts.iter().enumerate() {
                    let key = sums[i] + s;
                    let val = best[i] + f;
                    let code = combo[i] + radix * k as u64;
                    match seen.get(&key.to_bits()) {
                        Some(&j) if nb[j] >= val => {}
                        Some(&j) => {
                            nb[j] = val;
                            nc[j] = code;
                        }
                        None => {
                            seen.insert(key.to_bits(), ns.len());
                            ns.push(key);
                            nb.push(val);
                            nc.push(code);
                        }
                    }
                }
            }
            radix *= opts.len() as u64;
            sums = ns;
            best = nb;
            combo = nc;
        }
        Self { cells, sums, best, combo }
    }

    fn decode(&self, entry: usize, lattices: &[Vec<f64>], x: &mut [f64]) {
        let mut code = self.combo[entry];
        for &c in &self.cells {
            let r = lattices[c].len() as u64;
            x[c] = lattices[c][(code % r) as usize];
            code /= r;
        }
    }

    fn len(&self) -> usize {
        self.sums.len()
    }
}

/// Value list sorted by sum with a sparse table for range-argmax.
struct RangeMax {
    list: ValueList,
    table: Vec<Vec<u32>>,
}

impl RangeMax {
    fn new(mut list: ValueList) -> Self {
        let mut order: Vec<usize> = (0..list.len()).collect();
        order.sort_by(|&a, &b| list.sums[a].total_cmp(&list.sums[b]));
        list.sums = order.iter().map(|&i| list.sums[i]).collect();
        list.best = order.iter().map(|&i| list.best[i]).collect();
        list.combo = order.iter().map(|&i| list.combo[i]).collect();
        let n = list.len();
        let mut table = vec![(0..n as u32).collect::<Vec<u32>>()];
        let mut w = 1;
        while 2 * w <= n {
            let prev = table.last().unwrap();
            let row = (0..=n - 2 * w)
                .map(|i| {
                    let (a, b) = (prev[i], prev[i + w]);
                    if list.best[b as usize] > list.best[a as usize] {
                        b
                    } else {
                        a
                    }
                })
                .collect();
            table.push(row);
            w *= 2;
        }
        Self { list, table }
    }

    /// Best entry with sum in `[lo, hi]`.
    fn query(&self, lo: f64, hi: f64) -> Option<(f64, usize)> {
        let s = &self.list.sums;
        let a = s.partition_point(|v| *v < lo);
        let b = s.partition_point(|v| *v <= hi);
        if a >= b {
            return None;
        }
        let level = (usize::BITS - 1 - (b - a).leading_zeros()) as usize;
        let (i, j) = (self.table[level][a] as usize, self.table[level][b - (1 << level)] as usize);
        let k = if self.list.best[j] > self.list.best[i] { j } else { i };
        Some((self.list.best[k], k))
    }
}

/// Cells counted on a single day only.
enum DayGroup {
    Full(RangeMax),
    Split(ValueList, RangeMax),
}

impl DayGroup {
    fn new(cells: Vec<usize>, lattices: &[Vec<f64>], problem: &PricingProblem) -> Self {
        let size: f64 = cells.iter().map(|&c| lattices[c].len() as f64).product();
        if size <= SPLIT_ABOVE as f64 {
            return DayGroup::Full(RangeMax::new(ValueList::build(cells, lattices, problem)));
        }
        let mid = cells.len() / 2;
        let (a, b) = (cells[..mid].to_vec(), cells[mid..].to_vec());
        DayGroup::Split(ValueList::build(a, lattices, problem), RangeMax::new(ValueList::build(b, lattices, problem)))
    }

    fn cost(&self) -> f64 {
        match self {
            DayGroup::Full(_) => 1.0,
            DayGroup::Split(a, _) => a.len() as f64,
        }
    }

    fn query(&self, lo: f64, hi: f64) -> Option<(f64, (usize, usize))> {
        match self {
            DayGroup::Full(r) => r.query(lo, hi).map(|(f, k)| (f, (k, 0))),
            DayGroup::Split(a, b) => {
                let mut out: Option<(f64, (usize, usize))> = None;
                for i in 0..a.len() {
                    if let Some((f, k)) = b.query(lo - a.sums[i], hi - a.sums[i]) {
                        let v = f + a.best[i];
                        if out.is_none_or(|(o, _)| v > o) {
                            out = Some((v, (i, k)));
                        }
                    }
                }
                out
            }
        }
    }

    fn decode(&self, choice: (usize, usize), lattices: &[Vec<f64>], x: &mut [f64]) {
        match self {
            DayGroup::Full(r) => r.list.decode(choice.0, lattices, x),
            DayGroup::Split(a, b) => {
                a.decode(choice.0, lattices, x);
                b.list.decode(choice.1, lattices, x);
            }
        }
    }
}

struct State {
    /// Open partial sums for days `t+1..n`.
    key: Vec<f64>,
    value: f64,
    prev: usize,
    starts: Vec<usize>,
    single: Option<(usize, usize)>,
}

fn interval_dp(problem: &PricingProblem, lattices: &[Vec<f64>]) -> Result<(Vec<f64>, f64), QpError> {
    let n_days = problem.grid.dims.n_pickup_days;
    let mut x: Vec<f64> = lattices.iter().map(|l| l[0]).collect();

    // Cells with no footprint are unconstrained: maximize each alone.
    let mut by_interval: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut free_value = 0.0;
    for (c, cell) in problem.grid.dims.cells().enumerate() {
        match problem.footprint(cell) {
            Some(iv) => by_interval.entry(iv).or_default().push(c),
            None => {
                let (v, f) = lattices[c]
                    .iter()
                    .map(|&v| (v, problem.cell_margin(c, v)))
                    .fold((lattices[c][0], f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
                x[c] = v;
                free_value += f;
            }
        }
    }

    let mut singles: Vec<Option<DayGroup>> = (0..n_days).map(|_| None).collect();
    // multi-day groups by start day: (end, list)
    let mut starts: Vec<Vec<(usize, ValueList)>> = (0..n_days).map(|_| Vec::new()).collect();
    let mut intervals: Vec<_> = by_interval.into_iter().collect();
    intervals.sort();
    for ((s, e), cells) in intervals {
        if s == e {
            singles[s] = Some(DayGroup::new(cells, lattices, problem));
        } else {
            let size: f64 = cells.iter().map(|&c| lattices[c].len() as f64).product();
            if size > GROUP_LIMIT as f64 {
                return Err(QpError::SearchSpaceTooLarge { work: size, limit: GROUP_LIMIT as f64 });
            }
            starts[s].push((e, ValueList::build(cells, lattices, problem)));
        }
    }

    let mut layers: Vec<Vec<State>> = Vec::with_capacity(n_days);
    let mut current = vec![State { key: vec![0.0; n_days], value: 0.0, prev: 0, starts: vec![], single: None }];
    let mut work = 0.0;
    for t in 0..n_days {
        let fleet = f64::from(problem.grid.fleet[t]);
        let scale = fleet / 100.0;
        let u0 = problem.u0();
        let lo = (problem.band.0 * u0 - FEAS_TOL) * scale - problem.base_on_rents[t];
        let hi = (problem.band.1 * u0 + FEAS_TOL) * scale - problem.base_on_rents[t];
        let new_groups = &starts[t];
        let combos: f64 = new_groups.iter().map(|(_, g)| g.len() as f64).product();
        let query_cost = singles[t].as_ref().map_or(1.0, DayGroup::cost);
        work += current.len() as f64 * combos * query_cost;
        if work > DP_WORK_LIMIT {
            return Err(QpError::SearchSpaceTooLarge { work, limit: DP_WORK_LIMIT });
        }

        let mut next: Vec<State> = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut choice = vec![0usize; new_groups.len()];
        let mut key = vec![0.0; n_days - t - 1];
        let mut bits: Vec<u64> = Vec::with_capacity(key.len());
        for (si, st) in current.iter().enumerate() {
            choice.iter_mut().for_each(|c| *c = 0);
            'combos: loop {
                let mut total = st.key[0];
                let mut value = st.value;
                key.copy_from_slice(&st.key[1..]);
                for (g, &(end, ref list)) in new_groups.iter().enumerate() {
                    let s = list.sums[choice[g]];
                    total += s;
                    value += list.best[choice[g]];
                    for k in key.iter_mut().take(end - t) {
                        *k += s;
                    }
                }
                let single = match &singles[t] {
                    Some(group) => group.query(lo - total, hi - total).map(|(f, ch)| (f, Some(ch))),
                    None => (total >= lo && total <= hi).then_some((0.0, None)),
                };
                if let Some((f, ch)) = single {
                    let value = value + f;
                    bits.clear();
                    bits.extend(key.iter().map(|v| v.to_bits()));
                    match index.get(bits.as_slice()) {
                        Some(&j) if next[j].value >= value => {}
                        Some(&j) => {
                            next[j] = State { key: key.clone(), value, prev: si, starts: choice.clone(), single: ch };
                        }
                        None => {
                            index.insert(bits.clone(), next.len());
                            next.push(State { key: key.clone(), value, prev: si, starts: choice.clone(), single: ch });
                        }
                    }
                }
                // odometer over the new groups
                let mut g = 0;
                loop {
                    if g == choice.len() {
                        break 'combos;
                    }
                    choice[g] += 1;
                    if choice[g] < new_groups[g].1.len() {
                        break;
                    }
                    choice[g] = 0;
                    g += 1;
                }
            }
        }
        if next.is_empty() {
            return Err(QpError::Infeasible(format!("no lattice point meets the band on day {t}")));
        }
        layers.push(std::mem::replace(&mut current, next));
    }

    // `current` holds one state (empty key) after the last day.
    let (mut at, best) = current
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s.value))
        .fold((0, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
    layers.push(current);
    for t in (0..n_days).rev() {
        let st = &layers[t + 1][at];
        for (g, &c) in st.starts.iter().enumerate() {
            starts[t][g].1.decode(c, lattices, &mut x);
        }
        if let (Some(group), Some(ch)) = (&singles[t], st.single) {
            group.decode(ch, lattices, &mut x);
        }
        at = st.prev;
    }
    debug_assert!((problem.objective(&x) - (best + free_value)).abs() <= 1e-6 * (1.0 + best.abs()));
    Ok((x.clone(), problem.objective(&x)))
}
