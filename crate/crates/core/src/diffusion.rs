//! Reference evaluators of the multi-task diffusion objective: forward
//! Monte-Carlo cascades and exhaustive enumeration of live-edge realizations.
//!
//! The objective of a seed set `S` of registered users is
//!
//! ```text
//! f(S) = (1/n_T) * sum_j E[ sum_{v activated by S^j in layer j} q_j(v) ]
//! ```
//!
//! where `S^j` keeps the users of `S` that claimed task `j`.

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, NodeId, TaskGraph};
use crate::market::{Market, UserId};
use crate::rng::{self, Rng};

/// Default limit on the number of probabilistic edges per layer that
/// [`exact_f`] will enumerate.
pub const DEFAULT_ENUMERATION_CAP: usize = 25;

/// Nodes of the users in `seeds` that claimed `task`.
pub fn project_seeds(market: &Market, seeds: &[UserId], task: usize) -> Vec<NodeId> {
    seeds
        .iter()
        .filter(|&&u| market.claims(u).contains(task))
        .map(|&u| market.bidder(u).node)
        .collect()
}

/// Projection onto every task layer at once.
pub fn project_all(market: &Market, seeds: &[UserId]) -> Vec<Vec<NodeId>> {
    (0..market.task_count()).map(|j| project_seeds(market, seeds, j)).collect()
}

/// Source of edge coins for one cascade.
pub trait Coins {
    fn live(&mut self, edge: EdgeId, weight: f64) -> bool;
}

impl Coins for Rng {
    #[inline]
    fn live(&mut self, _edge: EdgeId, weight: f64) -> bool {
        if weight <= 0.0 {
            false
        } else if weight >= 1.0 {
            true
        } else {
            self.random::<f64>() < weight
        }
    }
}

/// Coins fixed by `(key, sim, task, edge)`: every evaluation that uses the same
/// key sees the same realizations.
#[derive(Clone, Copy, Debug)]
pub struct HashedCoins {
    pub key: u64,
    pub sim: u64,
    pub task: u64,
}

impl Coins for HashedCoins {
    #[inline]
    fn live(&mut self, edge: EdgeId, weight: f64) -> bool {
        weight >= 1.0 || (weight > 0.0 && rng::hashed_unit(self.key, self.sim, self.task, edge as u64) < weight)
    }
}

/// Reusable scratch buffers for forward cascades.
#[derive(Clone, Debug)]
pub struct Cascade {
    stamp: Vec<u32>,
    epoch: u32,
    active: Vec<NodeId>,
    frontier: Vec<NodeId>,
    next: Vec<NodeId>,
}

impl Cascade {
    pub fn new(node_count: usize) -> Self {
        Cascade { stamp: vec![0; node_count], epoch: 0, active: Vec::new(), frontier: Vec::new(), next: Vec::new() }
    }

    fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.active.clear();
        self.frontier.clear();
        self.next.clear();
    }

    /// Runs one cascade of layer `task` from `seeds`. Each newly activated node
    /// gets one coin per out-edge towards a still-inactive neighbour; frontiers
    /// are processed in ascending node id. Returns the activated nodes.
    pub fn run<C: Coins>(&mut self, graph: &TaskGraph, seeds: &[NodeId], task: usize, coins: &mut C) -> &[NodeId] {
        self.reset();
        let epoch = self.epoch;
        for &s in seeds {
            if self.stamp[s as usize] != epoch {
                self.stamp[s as usize] = epoch;
                self.active.push(s);
                self.frontier.push(s);
            }
        }
        while !self.frontier.is_empty() {
            self.frontier.sort_unstable();
            for &u in &self.frontier {
                for &(v, e) in graph.out_edges(u) {
                    if self.stamp[v as usize] != epoch && coins.live(e, graph.weight(task, e)) {
                        self.stamp[v as usize] = epoch;
                        self.active.push(v);
                        self.next.push(v);
                    }
                }
            }
            std::mem::swap(&mut self.frontier, &mut self.next);
            self.next.clear();
        }
        &self.active
    }

    /// Quality mass of a finished cascade.
    fn run_value<C: Coins>(&mut self, graph: &TaskGraph, seeds: &[NodeId], task: usize, coins: &mut C) -> f64 {
        if seeds.is_empty() {
            return 0.0;
        }
        self.run(graph, seeds, task, coins);
        self.active.iter().map(|&v| graph.node_quality(task, v)).sum()
    }
}

/// One forward cascade; the result contains `seeds` and is sorted.
pub fn simulate_once(graph: &TaskGraph, seeds: &[NodeId], task: usize, rng: &mut Rng) -> Vec<NodeId> {
    let mut c = Cascade::new(graph.node_count());
    let mut out = c.run(graph, seeds, task, rng).to_vec();
    out.sort_unstable();
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionEstimate {
    pub mean: f64,
    pub samples: usize,
    /// Sample standard deviation (n - 1 denominator; 0 for one sample).
    pub std_dev: f64,
}

impl DiffusionEstimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std_dev = if n > 1 {
            (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        DiffusionEstimate { mean, samples: n, std_dev }
    }

    pub fn std_error(&self) -> f64 {
        self.std_dev / (self.samples as f64).sqrt()
    }
}

/// Monte-Carlo estimate of `f` for already projected seed sets
/// (`projections[j]` seeds layer `j`). Simulation `s`, layer `j` draws from
/// substream `s * n_T + j`.
pub fn mc_estimate_projected(graph: &TaskGraph, projections: &[Vec<NodeId>], num_sims: usize, seed: u64) -> DiffusionEstimate {
    assert!(num_sims >= 1, "num_sims must be at least 1");
    assert_eq!(projections.len(), graph.task_count());
    let n_t = graph.task_count();
    if projections.iter().all(|p| p.is_empty()) {
        return DiffusionEstimate { mean: 0.0, samples: num_sims, std_dev: 0.0 };
    }
    let samples: Vec<f64> = (0..num_sims)
        .into_par_iter()
        .map_init(
            || Cascade::new(graph.node_count()),
            |cascade, s| {
                let mut total = 0.0;
                for (j, seeds) in projections.iter().enumerate() {
                    if seeds.is_empty() {
                        continue;
                    }
                    let mut rng = rng::substream(seed, (s * n_t + j) as u64);
                    total += cascade.run_value(graph, seeds, j, &mut rng);
                }
                total / n_t as f64
            },
        )
        .collect();
    DiffusionEstimate::from_samples(&samples)
}

/// Monte-Carlo estimate of `f(S)`.
pub fn mc_estimate(graph: &TaskGraph, market: &Market, seeds: &[UserId], num_sims: usize, seed: u64) -> DiffusionEstimate {
    mc_estimate_projected(graph, &project_all(market, seeds), num_sims, seed)
}

/// Averages `f` over a fixed bank of `num_sims` realizations per layer whose
/// coins are hashed from `key`. Two calls with the same key compare seed sets
/// on identical realizations.
pub fn crn_estimate(graph: &TaskGraph, projections: &[Vec<NodeId>], num_sims: usize, key: u64) -> f64 {
    let n_t = graph.task_count();
    if projections.iter().all(|p| p.is_empty()) {
        return 0.0;
    }
    let samples: Vec<f64> = (0..num_sims)
        .into_par_iter()
        .map_init(
            || Cascade::new(graph.node_count()),
            |cascade, s| {
                let mut total = 0.0;
                for (j, seeds) in projections.iter().enumerate() {
                    let mut coins = HashedCoins { key, sim: s as u64, task: j as u64 };
                    total += cascade.run_value(graph, seeds, j, &mut coins);
                }
                total / n_t as f64
            },
        )
        .collect();
    samples.iter().sum::<f64>() / num_sims as f64
}

/// Exact `f^j(seeds)` for one layer by enumerating every outcome of the edges
/// whose weight lies strictly between 0 and 1. Edges the seeds cannot reach
/// are left out of the enumeration and of the `cap` count.
pub fn exact_layer_value(graph: &TaskGraph, seeds: &[NodeId], task: usize, cap: usize) -> Result<f64> {
    if seeds.is_empty() {
        return Ok(0.0);
    }
    let m = graph.edge_count();
    let n = graph.node_count();
    let weights: Vec<f64> = (0..m).map(|e| graph.weight(task, e as EdgeId)).collect();

    // Only edges leaving nodes the seeds can possibly reach affect the value.
    let mut seen = vec![false; n];
    let mut stack: Vec<NodeId> = Vec::with_capacity(n);
    for &s in seeds {
        if !std::mem::replace(&mut seen[s as usize], true) {
            stack.push(s);
        }
    }
    let mut free = Vec::new();
    while let Some(u) = stack.pop() {
        for &(v, e) in graph.out_edges(u) {
            let w = weights[e as usize];
            if w > 0.0 && w < 1.0 {
                free.push(e as usize);
            }
            if w > 0.0 && !std::mem::replace(&mut seen[v as usize], true) {
                stack.push(v);
            }
        }
    }
    free.sort_unstable();
    if free.len() > cap {
        return Err(Error::Capacity { free: free.len(), cap });
    }

    let mut live: Vec<bool> = weights.iter().map(|&w| w >= 1.0).collect();
    let mut total = 0.0;
    for mask in 0u64..(1u64 << free.len()) {
        let mut prob = 1.0;
        for (bit, &e) in free.iter().enumerate() {
            let on = mask >> bit & 1 == 1;
            live[e] = on;
            prob *= if on { weights[e] } else { 1.0 - weights[e] };
        }
        seen.iter_mut().for_each(|s| *s = false);
        stack.clear();
        let mut value = 0.0;
        for &s in seeds {
            if !seen[s as usize] {
                seen[s as usize] = true;
                stack.push(s);
                value += graph.node_quality(task, s);
            }
        }
        while let Some(u) = stack.pop() {
            for &(v, e) in graph.out_edges(u) {
                if live[e as usize] && !seen[v as usize] {
                    seen[v as usize] = true;
                    stack.push(v);
                    value += graph.node_quality(task, v);
                }
            }
        }
        total += prob * value;
    }
    Ok(total)
}

/// Exact `f(S)` by enumeration, refusing layers with more than `cap` free edges.
pub fn exact_f_with_cap(graph: &TaskGraph, market: &Market, seeds: &[UserId], cap: usize) -> Result<f64> {
    let n_t = graph.task_count();
    let mut sum = 0.0;
    for j in 0..n_t {
        sum += exact_layer_value(graph, &project_seeds(market, seeds, j), j, cap)?;
    }
    Ok(sum / n_t as f64)
}

pub fn exact_f(graph: &TaskGraph, market: &Market, seeds: &[UserId]) -> Result<f64> {
    exact_f_with_cap(graph, market, seeds, DEFAULT_ENUMERATION_CAP)
}
