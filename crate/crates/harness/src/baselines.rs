//! The seed-selection algorithms compared in a run.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use anyhow::Result;
use mtcrowd::diffusion::{Coins, HashedCoins};
use mtcrowd::graph::{NodeId, TaskGraph};
use mtcrowd::market::{Bidder, Market, TaskSet, UserId};
use mtcrowd::opimc::{budgeted_w_max_coverage_ranked, compute_k, modified_opimc, BudgetedOptions, RoundLog};
use mtcrowd::rng;
use mtcrowd::rrset::RrCollection;
use mtcrowd::Error;
use rand::Rng;

use crate::config::Algorithm;
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug)]
pub struct BaselineParams {
    pub greedy_sims: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub compare_best_singleton: bool,
}

/// Seeds picked by one algorithm under one budget.
#[derive(Clone, Debug, Default)]
pub struct Selection {
    pub seeds: Vec<UserId>,
    pub spent: f64,
    /// The algorithm's own estimate of `f(seeds)`, when it has one.
    pub estimate: Option<f64>,
    pub rounds: Vec<RoundLog>,
    /// Final sample collection of the sampling-based algorithms.
    pub collection: Option<RrCollection>,
}

pub fn run_baseline(
    alg: Algorithm,
    scenario: &Scenario,
    budget: f64,
    params: &BaselineParams,
    seed: u64,
) -> Result<Selection> {
    let market = &scenario.market;
    let per_task_cost: Vec<f64> = market.bidders().iter().map(|b| b.bid / b.tasks.len() as f64).collect();
    match alg {
        Algorithm::ModifiedOpimc => {
            sampled_budgeted(&scenario.graph, market, &market.bids(), budget, params, seed, true)
        }
        Algorithm::Opimc => {
            let graph = scenario.graph.averaged_single_layer()?;
            let single = single_task_market(market)?;
            let mut s = sampled_budgeted(&graph, &single, &per_task_cost, budget, params, seed, false)?;
            s.collection = None;
            Ok(s)
        }
        Algorithm::Greedy => {
            let mut bank = CrnGreedy::new(&scenario.graph, market, params.greedy_sims, seed);
            let (seeds, spent) = lazy_ratio_greedy(market, &market.bids(), budget, &mut bank);
            Ok(Selection { seeds, spent, estimate: Some(bank.value()), ..Default::default() })
        }
        Algorithm::GreedyIm => {
            let graph = scenario.graph.averaged_single_layer()?;
            let single = single_task_market(market)?;
            let mut bank = CrnGreedy::new(&graph, &single, params.greedy_sims, seed);
            let (seeds, spent) = lazy_ratio_greedy(&single, &per_task_cost, budget, &mut bank);
            Ok(Selection { seeds, spent, ..Default::default() })
        }
        Algorithm::MaxDegree => {
            let key: Vec<f64> = (0..market.len())
                .map(|u| scenario.graph.out_degree(market.bidder(u).node) as f64 / per_task_cost[u])
                .collect();
            let mut order: Vec<UserId> = (0..market.len()).collect();
            order.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
            let mut sel = Selection::default();
            for u in order {
                if sel.spent + market.bid(u) <= budget {
                    sel.spent += market.bid(u);
                    sel.seeds.push(u);
                }
            }
            Ok(sel)
        }
        Algorithm::Random => {
            let mut r = rng::substream(seed, 0);
            let mut left: Vec<UserId> = (0..market.len()).collect();
            let mut sel = Selection::default();
            loop {
                left.retain(|&u| sel.spent + market.bid(u) <= budget);
                if left.is_empty() {
                    break;
                }
                let u = left.swap_remove(r.random_range(0..left.len()));
                sel.spent += market.bid(u);
                sel.seeds.push(u);
            }
            Ok(sel)
        }
    }
}

/// Every user claims the single task of an averaged graph.
fn single_task_market(market: &Market) -> Result<Market> {
    let bidders = market.bidders().iter().map(|b| Bidder { tasks: TaskSet::from_tasks([0]), ..*b }).collect();
    Ok(Market::new(bidders, market.node_count(), 1)?)
}

fn sampled_budgeted(
    graph: &TaskGraph,
    market: &Market,
    rank_cost: &[f64],
    budget: f64,
    params: &BaselineParams,
    seed: u64,
    report_estimate: bool,
) -> Result<Selection> {
    let k = match compute_k(&market.bids(), budget) {
        Ok(k) => k,
        Err(Error::Infeasible(_)) => return Ok(Selection::default()),
        Err(e) => return Err(e.into()),
    };
    let out = modified_opimc(graph, market, k, params.epsilon, params.delta, seed)?;
    let opts = BudgetedOptions { compare_best_singleton: params.compare_best_singleton };
    let s = budgeted_w_max_coverage_ranked(&out.collection, market, budget, rank_cost, opts)?;
    Ok(Selection {
        seeds: s.seeds,
        spent: s.spent,
        estimate: report_estimate.then_some(s.value),
        rounds: out.rounds,
        collection: Some(out.collection),
    })
}

/// Incremental marginal gains over a fixed bank of realizations whose edge
/// coins are hashed from a key. In a fixed realization the nodes activated by
/// `S + v` are those of `S` plus whatever `v` reaches without passing through
/// them, so gains need only a pruned search from `v`. Averages over a fixed
/// bank are monotone and submodular, which keeps lazy evaluation exact.
pub struct CrnGreedy<'a> {
    graph: &'a TaskGraph,
    market: &'a Market,
    sims: usize,
    key: u64,
    /// `[(sim * n_T + task) * n + node]`
    active: Vec<bool>,
    covered: f64,
    stamp: Vec<u32>,
    epoch: u32,
    stack: Vec<NodeId>,
}

impl<'a> CrnGreedy<'a> {
    pub fn new(graph: &'a TaskGraph, market: &'a Market, sims: usize, key: u64) -> Self {
        let n = graph.node_count();
        CrnGreedy {
            graph,
            market,
            sims,
            key,
            active: vec![false; sims * graph.task_count() * n],
            covered: 0.0,
            stamp: vec![0; n],
            epoch: 0,
            stack: Vec::new(),
        }
    }

    fn norm(&self) -> f64 {
        (self.sims * self.graph.task_count()) as f64
    }

    /// Estimated `f` of the committed seeds.
    pub fn value(&self) -> f64 {
        self.covered / self.norm()
    }

    /// Quality newly reached from `root` in one realization; marks it if `commit`.
    fn spread(&mut self, root: NodeId, sim: usize, task: usize, commit: bool) -> f64 {
        let n = self.graph.node_count();
        let base = (sim * self.graph.task_count() + task) * n;
        if self.active[base + root as usize] {
            return 0.0;
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        let epoch = self.epoch;
        let mut coins = HashedCoins { key: self.key, sim: sim as u64, task: task as u64 };
        let mut total = 0.0;
        self.stamp[root as usize] = epoch;
        self.stack.clear();
        self.stack.push(root);
        while let Some(u) = self.stack.pop() {
            total += self.graph.node_quality(task, u);
            if commit {
                self.active[base + u as usize] = true;
            }
            for &(v, e) in self.graph.out_edges(u) {
                let vi = v as usize;
                if self.stamp[vi] != epoch && !self.active[base + vi] && coins.live(e, self.graph.weight(task, e)) {
                    self.stamp[vi] = epoch;
                    self.stack.push(v);
                }
            }
        }
        total
    }

    fn visit(&mut self, u: UserId, commit: bool) -> f64 {
        let b = *self.market.bidder(u);
        let mut total = 0.0;
        for task in b.tasks.iter() {
            for sim in 0..self.sims {
                total += self.spread(b.node, sim, task, commit);
            }
        }
        total
    }
}

/// Supplies marginal gains to the lazy greedy and records picks.
pub trait GainOracle {
    fn gain(&mut self, u: UserId) -> f64;
    fn commit(&mut self, u: UserId);
}

impl GainOracle for CrnGreedy<'_> {
    fn gain(&mut self, u: UserId) -> f64 {
        self.visit(u, false) / self.norm()
    }

    fn commit(&mut self, u: UserId) {
        self.covered += self.visit(u, true);
    }
}

#[derive(PartialEq)]
struct Entry {
    key: f64,
    user: UserId,
    fresh_at: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then(other.user.cmp(&self.user))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Ratio greedy with lazily re-evaluated gains: picks the user maximising
/// `gain / rank_cost`, ties to the lowest id, stops when the best user has no
/// gain or its bid overflows the budget.
pub fn lazy_ratio_greedy(
    market: &Market,
    rank_cost: &[f64],
    budget: f64,
    oracle: &mut impl GainOracle,
) -> (Vec<UserId>, f64) {
    let mut heap: BinaryHeap<Entry> =
        (0..market.len()).map(|u| Entry { key: oracle.gain(u) / rank_cost[u], user: u, fresh_at: 0 }).collect();
    let mut picks = Vec::new();
    let mut spent = 0.0;
    while let Some(top) = heap.pop() {
        if top.fresh_at != picks.len() {
            let key = oracle.gain(top.user) / rank_cost[top.user];
            heap.push(Entry { key, user: top.user, fresh_at: picks.len() });
            continue;
        }
        if top.key <= 0.0 || spent + market.bid(top.user) > budget {
            break;
        }
        oracle.commit(top.user);
        spent += market.bid(top.user);
        picks.push(top.user);
    }
    (picks, spent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mtcrowd::auction::CostProfile;
    use mtcrowd::diffusion::crn_estimate;
    use mtcrowd::graph::{assign_uniform_layers, EdgeList};

    fn star_scenario(bids: &[f64]) -> Scenario {
        // hub 0 -> 1..=5, leaf 6 -> 7
        let e = EdgeList::new(8, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (6, 7)]).unwrap();
        let w = assign_uniform_layers(&e, &[0.5, 0.9]).unwrap();
        let graph = TaskGraph::with_uniform_quality(e, w, &[1.0, 0.5]).unwrap();
        let bidders = bids
            .iter()
            .enumerate()
            .map(|(i, &bid)| Bidder { node: [0, 6, 2, 7][i], tasks: TaskSet::from_tasks([0, 1]), bid })
            .collect();
        let market = Market::new(bidders, 8, 2).unwrap();
        let costs = CostProfile::truthful(&market);
        Scenario { seed: 0, graph, market, costs, kept_tasks: vec![0, 1] }
    }

    fn params() -> BaselineParams {
        BaselineParams { greedy_sims: 200, epsilon: 0.1, delta: 0.1, compare_best_singleton: true }
    }

    #[test]
    fn max_degree_takes_the_hub_first() {
        let s = star_scenario(&[1.0, 1.0, 1.0, 1.0]);
        let sel = run_baseline(Algorithm::MaxDegree, &s, 1.5, &params(), 1).unwrap();
        assert_eq!(sel.seeds, vec![0]);
    }

    #[test]
    fn random_takes_everyone_when_budget_is_loose() {
        let s = star_scenario(&[1.0, 2.0, 1.0, 1.5]);
        let sel = run_baseline(Algorithm::Random, &s, 100.0, &params(), 3).unwrap();
        let mut seeds = sel.seeds.clone();
        seeds.sort_unstable();
        assert_eq!(seeds, vec![0, 1, 2, 3]);
        assert_eq!(sel.spent, 5.5);
    }

    #[test]
    fn random_respects_budget() {
        let s = star_scenario(&[1.0, 2.0, 1.0, 1.5]);
        for seed in 0..20 {
            let sel = run_baseline(Algorithm::Random, &s, 2.6, &params(), seed).unwrap();
            assert!(sel.spent <= 2.6);
            // nobody left fits
            assert!((0..4).filter(|u| !sel.seeds.contains(u)).all(|u| sel.spent + s.market.bid(u) > 2.6));
        }
    }

    #[test]
    fn incremental_gains_match_full_estimates() {
        let s = star_scenario(&[1.0, 1.0, 1.0, 1.0]);
        let mut bank = CrnGreedy::new(&s.graph, &s.market, 300, 42);
        let mut seeds = Vec::new();
        for u in [2, 0, 3] {
            let before = crn_estimate(&s.graph, &mtcrowd::diffusion::project_all(&s.market, &seeds), 300, 42);
            let g = bank.gain(u);
            seeds.push(u);
            let after = crn_estimate(&s.graph, &mtcrowd::diffusion::project_all(&s.market, &seeds), 300, 42);
            assert!((g - (after - before)).abs() < 1e-9, "{g} vs {}", after - before);
            bank.commit(u);
            assert!((bank.value() - after).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_algorithms_prefer_the_hub() {
        let s = star_scenario(&[1.0, 1.0, 1.0, 1.0]);
        for alg in [Algorithm::ModifiedOpimc, Algorithm::Opimc, Algorithm::Greedy, Algorithm::GreedyIm] {
            let sel = run_baseline(alg, &s, 1.0, &params(), 5).unwrap();
            assert_eq!(sel.seeds, vec![0], "{alg}");
        }
    }

    #[test]
    fn infeasible_budget_selects_nobody() {
        let s = star_scenario(&[2.0, 2.0, 2.0, 2.0]);
        for alg in Algorithm::ALL {
            let sel = run_baseline(alg, &s, 1.0, &params(), 5).unwrap();
            assert!(sel.seeds.is_empty(), "{alg}");
        }
    }
}
