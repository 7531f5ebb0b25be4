//! Sample-size control and greedy coverage over MT-RR collections.
//!
//! The budget constraint is first relaxed to a cardinality `K` (the largest
//! number of users whose bids fit), which fixes how many sets are needed.
//! Two independent collections are then doubled until the greedy size-`K`
//! solution on the first one is certified, through concentration bounds
//! computed on both, to be within `1 - 1/e - eps` of optimal.

use std::f64::consts::E;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::graph::TaskGraph;
use crate::market::{Market, UserId};
use crate::rng;
use crate::rrset::{Coverage, RrCollection};

/// Largest number of users any budget-feasible set can hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CardinalityBound(pub usize);

pub fn compute_k(bids: &[f64], budget: f64) -> Result<CardinalityBound> {
    if !(budget > 0.0) {
        return Err(Error::domain(format!("budget {budget} must be positive")));
    }
    if bids.is_empty() {
        return Err(Error::Infeasible("no registered users".into()));
    }
    let mut sorted = bids.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut k = 0;
    for b in sorted {
        if sum + b > budget {
            break;
        }
        sum += b;
        k += 1;
    }
    if k == 0 {
        return Err(Error::Infeasible(format!("cheapest bid exceeds budget {budget}")));
    }
    Ok(CardinalityBound(k))
}

/// `ln C(n, k)` as a sum of logarithms.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    assert!(k <= n, "k = {k} > n = {n}");
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
}

/// Users sorted by descending key; ties go to the smaller id.
#[inline]
fn better(key: f64, u: UserId, best: Option<(f64, UserId)>) -> bool {
    match best {
        None => true,
        Some((bk, bu)) => key > bk || (key == bk && u < bu),
    }
}

/// Output of the size-`K` greedy.
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyTrace {
    /// Picks in selection order.
    pub seeds: Vec<UserId>,
    /// Marginal gain of each pick when it was made.
    pub gains: Vec<f64>,
    /// `f^` of the final seed set.
    pub value: f64,
    /// `min_a { f^(S_a) + sum of the K largest marginal gains w.r.t. S_a }`,
    /// an upper bound on the best size-`K` value on the same collection.
    pub upper: f64,
}

fn top_k_sum(gains: &mut [f64], k: usize) -> f64 {
    if k == 0 || gains.is_empty() {
        return 0.0;
    }
    if k < gains.len() {
        gains.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        gains[..k].iter().sum()
    } else {
        gains.iter().sum()
    }
}

/// Picks `k` users one at a time by largest marginal coverage gain.
pub fn weighted_max_coverage(rr: &RrCollection, market: &Market, k: usize) -> GreedyTrace {
    let k = k.min(market.len());
    let mut cov = Coverage::new(rr, market);
    let mut seeds = Vec::with_capacity(k);
    let mut gains = Vec::with_capacity(k);
    let mut upper = f64::INFINITY;
    let mut scratch = Vec::with_capacity(market.len());
    for a in 0..=k {
        scratch.clear();
        let mut best: Option<(f64, UserId)> = None;
        for u in 0..market.len() {
            if cov.is_selected(u) {
                continue;
            }
            let g = cov.gain(u);
            scratch.push(g);
            if better(g, u, best) {
                best = Some((g, u));
            }
        }
        upper = upper.min(cov.value() + top_k_sum(&mut scratch, k));
        if a == k {
            break;
        }
        let (g, u) = best.expect("k <= number of users");
        cov.add(u);
        seeds.push(u);
        gains.push(g);
    }
    GreedyTrace { seeds, gains, value: cov.value(), upper }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BudgetedOptions {
    /// Return the best affordable single user instead when it beats the
    /// ratio-greedy set.
    pub compare_best_singleton: bool,
}

impl Default for BudgetedOptions {
    fn default() -> Self {
        BudgetedOptions { compare_best_singleton: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetedSelection {
    pub seeds: Vec<UserId>,
    pub value: f64,
    pub spent: f64,
    /// True when the best singleton replaced the greedy set.
    pub singleton: bool,
}

/// Gain-per-cost greedy: repeatedly takes the unselected user with positive
/// gain maximising `gain / rank_cost[u]`, and stops at the first such user
/// whose bid no longer fits. Returns the picks and the amount spent.
pub fn ratio_greedy(cov: &mut Coverage<'_>, rank_cost: &[f64], budget: f64, exclude: Option<UserId>) -> f64 {
    let market = cov.market();
    let mut spent = 0.0;
    loop {
        let mut best: Option<(f64, UserId)> = None;
        for u in 0..market.len() {
            if Some(u) == exclude || cov.is_selected(u) || !cov.has_gain(u) {
                continue;
            }
            let r = cov.gain(u) / rank_cost[u];
            if better(r, u, best) {
                best = Some((r, u));
            }
        }
        let Some((_, u)) = best else { break };
        let b = market.bid(u);
        if spent + b > budget {
            break;
        }
        cov.add(u);
        spent += b;
    }
    spent
}

/// Budgeted greedy with optional best-singleton fallback, ranking users by
/// `gain / rank_cost[u]` while charging their bids against the budget.
pub fn budgeted_w_max_coverage_ranked(
    rr: &RrCollection,
    market: &Market,
    budget: f64,
    rank_cost: &[f64],
    opts: BudgetedOptions,
) -> Result<BudgetedSelection> {
    if !(budget > 0.0) {
        return Err(Error::domain(format!("budget {budget} must be positive")));
    }
    assert_eq!(rank_cost.len(), market.len());
    if !market.bidders().iter().any(|b| b.bid <= budget) {
        return Err(Error::Infeasible(format!("no registered user can be afforded with budget {budget}")));
    }
    let mut cov = Coverage::new(rr, market);
    let singles: Vec<f64> = (0..market.len()).map(|u| cov.gain(u)).collect();
    let spent = ratio_greedy(&mut cov, rank_cost, budget, None);
    let greedy = BudgetedSelection { seeds: cov.seeds().to_vec(), value: cov.value(), spent, singleton: false };
    if !opts.compare_best_singleton {
        return Ok(greedy);
    }
    let mut best: Option<(f64, UserId)> = None;
    for (u, &g) in singles.iter().enumerate() {
        if market.bid(u) <= budget && better(g, u, best) {
            best = Some((g, u));
        }
    }
    let (g, u) = best.expect("checked above that some user is affordable");
    if g > greedy.value {
        Ok(BudgetedSelection { seeds: vec![u], value: g, spent: market.bid(u), singleton: true })
    } else {
        Ok(greedy)
    }
}

/// Budgeted greedy ranked by marginal gain per unit bid.
pub fn budgeted_w_max_coverage(
    rr: &RrCollection,
    market: &Market,
    budget: f64,
    opts: BudgetedOptions,
) -> Result<BudgetedSelection> {
    budgeted_w_max_coverage_ranked(rr, market, budget, &market.bids(), opts)
}

/// Lower confidence bound on `f(S)` from an independent collection of size
/// `theta` on which `S` scored `f_hat`. `scale` is the largest per-set
/// multiplier, so `f_hat / scale * theta` is the normalised covered mass.
/// Holds with probability at least `1 - delta`.
pub fn lower_bound(f_hat: f64, theta: usize, scale: f64, delta: f64) -> f64 {
    assert!(theta >= 1);
    let eta = (1.0 / delta).ln();
    let covered = f_hat / scale * theta as f64;
    let root = (covered + 2.0 * eta / 9.0).sqrt() - (eta / 2.0).sqrt();
    if root <= 0.0 {
        return 0.0;
    }
    let v = root * root - eta / 18.0;
    if v <= 0.0 {
        0.0
    } else {
        v / theta as f64 * scale
    }
}

/// Upper confidence bound on the optimum from `f_prime`, an upper bound on the
/// optimum's estimate over a collection of size `theta`.
pub fn upper_bound(f_prime: f64, theta: usize, scale: f64, delta: f64) -> f64 {
    assert!(theta >= 1);
    let eta = (1.0 / delta).ln();
    let covered = f_prime / scale * theta as f64;
    let r = (covered + eta / 2.0).sqrt() + (eta / 2.0).sqrt();
    r * r / theta as f64 * scale
}

/// Largest collection size the doubling schedule may need.
pub fn theta_max(n_r: usize, k: usize, epsilon: f64, delta: f64) -> f64 {
    let a = 1.0 - 1.0 / E;
    let l6 = (6.0 / delta).ln();
    let inner = a * l6.sqrt() + (a * (ln_binomial(n_r, k) + l6)).sqrt();
    2.0 * inner * inner / (epsilon * epsilon * k as f64)
}

/// Smallest collection size any round uses.
pub const MIN_INITIAL_THETA: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpimcParams {
    pub epsilon: f64,
    pub delta: f64,
    pub k: usize,
    pub theta_max: f64,
    /// `theta_max * eps^2 * K` before rounding.
    pub theta_0: f64,
    /// Size of the first round: `max(ceil(theta_0), 32)`.
    pub theta_start: usize,
    pub i_max: usize,
    /// Failure probability given to each bound in each round.
    pub delta_round: f64,
}

impl OpimcParams {
    pub fn new(n_r: usize, k: usize, epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("epsilon {epsilon} and delta {delta} must lie in (0,1)")));
        }
        if k == 0 || k > n_r {
            return Err(Error::domain(format!("K = {k} must be in 1..={n_r}")));
        }
        let tmax = theta_max(n_r, k, epsilon, delta);
        let theta_0 = tmax * epsilon * epsilon * k as f64;
        let i_max = Self::rounds(epsilon, k);
        Ok(OpimcParams {
            epsilon,
            delta,
            k,
            theta_max: tmax,
            theta_0,
            theta_start: (theta_0.ceil() as usize).max(MIN_INITIAL_THETA),
            i_max,
            delta_round: delta / (3.0 * i_max as f64),
        })
    }

    /// `ceil(log2(theta_max / theta_0)) = ceil(log2(1 / (eps^2 K)))`, at least 1.
    fn rounds(epsilon: f64, k: usize) -> usize {
        let l = (1.0 / (epsilon * epsilon * k as f64)).log2();
        let nearest = l.round();
        let c = if (l - nearest).abs() < 1e-9 { nearest } else { l.ceil() };
        (c as i64).max(1) as usize
    }

    /// Collection size used in each round.
    pub fn schedule(&self) -> Vec<usize> {
        let cap = (self.theta_max.ceil() as usize).max(self.theta_start);
        (0..self.i_max).map(|i| self.theta_start.saturating_mul(1usize << i.min(62)).min(cap)).collect()
    }

    pub fn target_ratio(&self) -> f64 {
        1.0 - 1.0 / E - self.epsilon
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    pub theta: usize,
    /// `f^` of the greedy size-`K` set on the first collection.
    pub f_hat: f64,
    pub f_low: f64,
    pub f_up: f64,
    pub ratio: f64,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct OpimcOutcome {
    pub params: OpimcParams,
    /// The first collection at termination.
    pub collection: RrCollection,
    pub greedy: GreedyTrace,
    pub rounds: Vec<RoundLog>,
}

impl OpimcOutcome {
    pub fn certified(&self) -> bool {
        self.rounds.last().is_some_and(|r| r.ratio >= self.params.target_ratio())
    }
}

const FIRST_COLLECTION: u64 = 1;
const SECOND_COLLECTION: u64 = 2;

/// Doubles two independent collections until the greedy size-`K` solution is
/// certified or the round limit is reached, and returns the first collection.
pub fn modified_opimc(
    graph: &TaskGraph,
    market: &Market,
    k: CardinalityBound,
    epsilon: f64,
    delta: f64,
    seed: u64,
) -> Result<OpimcOutcome> {
    let params = OpimcParams::new(market.len(), k.0, epsilon, delta)?;
    let mut r1 = RrCollection::new(graph, rng::derive_seed(seed, FIRST_COLLECTION))?;
    let mut r2 = RrCollection::new(graph, rng::derive_seed(seed, SECOND_COLLECTION))?;
    let scale = r1.max_scale();
    let mut rounds = Vec::new();
    let schedule = params.schedule();
    let mut greedy = None;
    for (i, &theta) in schedule.iter().enumerate() {
        let started = Instant::now();
        r1.extend(graph, theta)?;
        r2.extend(graph, theta)?;
        let g = weighted_max_coverage(&r1, market, k.0);
        let f_low = lower_bound(r2.estimate(market, &g.seeds)?, r2.len(), scale, params.delta_round);
        let f_up = upper_bound(g.upper, r1.len(), scale, params.delta_round);
        let ratio = if f_up > 0.0 { f_low / f_up } else { 0.0 };
        rounds.push(RoundLog { round: i + 1, theta, f_hat: g.value, f_low, f_up, ratio, elapsed: started.elapsed() });
        greedy = Some(g);
        if ratio >= params.target_ratio() {
            break;
        }
    }
    Ok(OpimcOutcome { params, collection: r1, greedy: greedy.expect("at least one round"), rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{assign_uniform_layers, EdgeList};
    use crate::market::{Bidder, TaskSet};

    #[test]
    fn k_examples() {
        assert_eq!(compute_k(&[3.0, 5.0, 2.0], 6.0).unwrap(), CardinalityBound(2));
        assert_eq!(compute_k(&[1.5; 20], 15.0).unwrap(), CardinalityBound(10));
        assert!(matches!(compute_k(&[1.0], 0.5), Err(Error::Infeasible(_))));
        assert!(compute_k(&[1.0], 0.0).is_err());
        assert!(compute_k(&[], 1.0).is_err());
    }

    #[test]
    fn bound_limits() {
        // eta = 0 when delta = 1
        assert!((lower_bound(0.37, 1000, 1.0, 1.0) - 0.37).abs() < 1e-15);
        assert!((upper_bound(0.37, 1000, 1.0, 1.0) - 0.37).abs() < 1e-15);
        assert_eq!(lower_bound(0.0, 1000, 1.0, 0.05), 0.0);
        assert_eq!(lower_bound(0.0, 1, 1.0, 0.5), 0.0);
        // scale commutes
        let a = lower_bound(0.2, 500, 1.0, 0.01) * 7.0;
        let b = lower_bound(1.4, 500, 7.0, 0.01);
        assert!((a - b).abs() < 1e-12);
        assert!(upper_bound(0.2, 500, 1.0, 0.01) > 0.2);
        assert!(lower_bound(0.2, 500, 1.0, 0.01) < 0.2);
    }

    #[test]
    fn rounds_and_schedule() {
        let p = OpimcParams::new(100, 5, 0.1, 0.01).unwrap();
        // 1 / (0.01 * 5) = 20
        assert_eq!(p.i_max, 5);
        assert!((p.delta_round - 0.01 / 15.0).abs() < 1e-18);
        let s = p.schedule();
        assert_eq!(s.len(), 5);
        assert_eq!(s[0], p.theta_start);
        for w in s.windows(2) {
            assert!(w[1] == 2 * w[0] || w[1] == p.theta_max.ceil() as usize);
        }
        // exact power of two: 1 / (0.25 * 1) = 4
        assert_eq!(OpimcParams::new(10, 1, 0.5, 0.1).unwrap().i_max, 2);
        // eps^2 K >= 1 collapses to a single round
        assert_eq!(OpimcParams::new(1000, 200, 0.1, 0.1).unwrap().i_max, 1);
        assert!(OpimcParams::new(10, 1, 1.0, 0.1).is_err());
        assert!(OpimcParams::new(10, 11, 0.1, 0.1).is_err());
    }

    /// Hub 0 reaches every other node deterministically.
    fn star_of(n: u32) -> (TaskGraph, Market) {
        let edges: Vec<(u32, u32)> = (1..n).map(|v| (0, v)).collect();
        let e = EdgeList::new(n as usize, &edges).unwrap();
        let g = TaskGraph::with_uniform_quality(e.clone(), assign_uniform_layers(&e, &[1.0]).unwrap(), &[1.0]).unwrap();
        let b = (0..n).map(|node| Bidder { node, tasks: TaskSet::from_tasks([0]), bid: 1.0 }).collect();
        (g, Market::new(b, n as usize, 1).unwrap())
    }

    fn star() -> (TaskGraph, Market) {
        star_of(7)
    }

    #[test]
    fn greedy_picks_hub_first() {
        let (g, m) = star();
        let rr = RrCollection::generate(&g, 3, 500).unwrap();
        let t = weighted_max_coverage(&rr, &m, 1);
        assert_eq!(t.seeds, vec![0]);
        assert!((t.value - 7.0).abs() < 1e-12);
        assert!(t.upper >= t.value);
        let t2 = weighted_max_coverage(&rr, &m, 3);
        assert_eq!(t2.seeds, vec![0, 1, 2]);
        assert_eq!(&t2.gains[1..], &[0.0, 0.0]);
    }

    #[test]
    fn budget_never_binding_takes_all_positive_gain_users() {
        let (g, m) = star();
        let rr = RrCollection::generate(&g, 3, 500).unwrap();
        let s = budgeted_w_max_coverage(&rr, &m, 100.0, BudgetedOptions::default()).unwrap();
        assert_eq!(s.seeds, vec![0]);
        assert!(budgeted_w_max_coverage(&rr, &m, 0.5, BudgetedOptions::default()).is_err());
    }

    #[test]
    fn deterministic_dominant_node_certifies_in_round_one() {
        let (g, m) = star_of(1000);
        let k = compute_k(&m.bids(), 20.0).unwrap();
        assert_eq!(k, CardinalityBound(20));
        let out = modified_opimc(&g, &m, k, 0.1, 0.1, 5).unwrap();
        assert!(out.params.i_max > 1);
        assert_eq!(out.rounds.len(), 1);
        assert!(out.certified(), "{:?}", out.rounds);
        assert_eq!(out.greedy.seeds[0], 0);
        assert!((out.greedy.value - 1000.0).abs() < 1e-9);
        let again = modified_opimc(&g, &m, k, 0.1, 0.1, 5).unwrap();
        assert_eq!(again.collection, out.collection);
        assert_eq!(again.greedy, out.greedy);
    }
}
