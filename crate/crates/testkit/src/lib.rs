//! Brute-force reference implementations for checking the library on small
//! instances. Nothing here shares code paths with the routines it checks:
//! estimates are recomputed by scanning every set, optima by enumerating
//! every subset, critical bids by bisection over re-run auctions.

use mtcrowd::auction::select_winners;
use mtcrowd::diffusion::exact_f;
use mtcrowd::graph::{EdgeList, LayerWeights, TaskGraph};
use mtcrowd::market::{Bidder, Market, TaskSet, UserId};
use mtcrowd::rng;
use mtcrowd::rrset::RrCollection;
use rand::seq::index::sample;
use rand::Rng;

/// Shape of a random small instance.
#[derive(Clone, Copy, Debug)]
pub struct InstanceSpec {
    pub nodes: usize,
    pub edges: usize,
    pub tasks: usize,
    pub users: usize,
    /// Edge weights drawn from {0, 0.5, 1} instead of uniform (0, 1).
    pub coarse_weights: bool,
    pub bid_range: (f64, f64),
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec { nodes: 8, edges: 12, tasks: 2, users: 6, coarse_weights: false, bid_range: (0.8, 1.2) }
    }
}

/// Random graph with per-node qualities and a random market on it. Every user
/// claims at least one task.
pub fn random_instance(spec: InstanceSpec, seed: u64) -> (TaskGraph, Market) {
    let mut r = rng::substream(seed, 0);
    let n = spec.nodes;
    let edges: Vec<(u32, u32)> =
        (0..spec.edges).map(|_| (r.random_range(0..n) as u32, r.random_range(0..n) as u32)).collect();
    let list = EdgeList::new(n, &edges).unwrap();
    let rows = (0..spec.tasks)
        .map(|_| {
            (0..spec.edges)
                .map(|_| {
                    if spec.coarse_weights {
                        [0.0, 0.5, 1.0][r.random_range(0..3)]
                    } else {
                        r.random_range(0.05..0.95)
                    }
                })
                .collect()
        })
        .collect();
    let weights = LayerWeights::new(rows, spec.edges).unwrap();
    let quality: Vec<Vec<f64>> = (0..spec.tasks).map(|_| (0..n).map(|_| r.random_range(0.0..1.0)).collect()).collect();
    let graph = TaskGraph::with_node_quality(list, weights, &quality).unwrap();
    let market = random_market(&mut r, n, spec.tasks, spec.users, spec.bid_range);
    (graph, market)
}

pub fn random_market(r: &mut impl Rng, nodes: usize, tasks: usize, users: usize, bid_range: (f64, f64)) -> Market {
    let chosen = sample(r, nodes, users.min(nodes));
    let bidders = chosen
        .iter()
        .map(|node| {
            let mut claims = TaskSet::empty();
            while claims.is_empty() {
                claims = TaskSet::from_tasks((0..tasks).filter(|_| r.random_bool(0.5)));
            }
            Bidder { node: node as u32, tasks: claims, bid: r.random_range(bid_range.0..=bid_range.1) }
        })
        .collect();
    Market::new(bidders, nodes, tasks).unwrap()
}

/// `f^(S)` by scanning every set and every member.
pub fn scan_estimate(rr: &RrCollection, market: &Market, seeds: &[UserId]) -> f64 {
    let mut sum = 0.0;
    for x in 0..rr.len() {
        let set = rr.set(x);
        let hit = seeds.iter().any(|&u| {
            let b = market.bidder(u);
            b.tasks.contains(set.task) && set.nodes.contains(&b.node)
        });
        if hit {
            sum += rr.scale(set.task);
        }
    }
    sum / rr.len() as f64
}

pub fn users_of_mask(mask: usize) -> Vec<UserId> {
    (0..usize::BITS as usize).filter(|&u| mask >> u & 1 == 1).collect()
}

/// `f^` of every subset of up to ~20 users, through a subset-sum transform:
/// a set is missed by `S` exactly when its covering-user mask avoids `S`.
pub struct SubsetValues {
    users: usize,
    total: f64,
    missed: Vec<f64>,
}

impl SubsetValues {
    pub fn new(rr: &RrCollection, market: &Market) -> Self {
        let users = market.len();
        assert!(users <= 20, "exhaustive oracle limited to 20 users");
        let full = 1usize << users;
        let mut missed = vec![0.0; full];
        let mut total = 0.0;
        for x in 0..rr.len() {
            let set = rr.set(x);
            let mut mask = 0usize;
            for (u, b) in market.bidders().iter().enumerate() {
                if b.tasks.contains(set.task) && set.nodes.contains(&b.node) {
                    mask |= 1 << u;
                }
            }
            let w = rr.scale(set.task) / rr.len() as f64;
            total += w;
            missed[mask] += w;
        }
        for bit in 0..users {
            for m in 0..full {
                if m >> bit & 1 == 1 {
                    missed[m] += missed[m ^ (1 << bit)];
                }
            }
        }
        SubsetValues { users, total, missed }
    }

    pub fn value(&self, mask: usize) -> f64 {
        let complement = ((1usize << self.users) - 1) & !mask;
        self.total - self.missed[complement]
    }

    pub fn best_of_size(&self, k: usize) -> (usize, f64) {
        (0..1usize << self.users)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (m, self.value(m)))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    }

    pub fn best_within_budget(&self, market: &Market, budget: f64) -> (usize, f64) {
        (0..1usize << self.users)
            .filter(|&m| users_of_mask(m).iter().map(|&u| market.bid(u)).sum::<f64>() <= budget)
            .map(|m| (m, self.value(m)))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    }
}

/// Best exact objective over all budget-feasible user subsets.
pub fn exact_best_within_budget(graph: &TaskGraph, market: &Market, budget: f64) -> f64 {
    let mut best = 0.0f64;
    for mask in 0..1usize << market.len() {
        let users = users_of_mask(mask);
        if users.iter().map(|&u| market.bid(u)).sum::<f64>() <= budget {
            best = best.max(exact_f(graph, market, &users).unwrap());
        }
    }
    best
}

/// Largest bid with which `user` still wins, located by bisection on `[lo, hi]`
/// by re-running winner selection. Returns `None` if `user` loses even at `lo`.
pub fn critical_bid_search(rr: &RrCollection, market: &Market, user: UserId, budget: f64, tol: f64) -> Option<f64> {
    let wins = |bid: f64| {
        let m = market.with_bid(user, bid).unwrap();
        select_winners(rr, &m, budget).unwrap().contains(&user)
    };
    let mut lo = tol.min(market.bid(user)) * 1e-3;
    if !wins(lo) {
        return None;
    }
    let mut hi = budget + tol;
    if wins(hi) {
        return Some(hi);
    }
    while hi - lo > tol * 1e-2 {
        let mid = 0.5 * (lo + hi);
        if wins(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Six nodes, seven edges, two tasks, weights from {0, 0.5, 1} and a
/// different quality for every node. Every node is registered.
pub fn desk_instance() -> (TaskGraph, Market) {
    let edges = [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (4, 5), (5, 0)];
    let list = EdgeList::new(6, &edges).unwrap();
    let weights = LayerWeights::new(
        vec![vec![1.0, 0.5, 0.5, 0.0, 1.0, 0.5, 0.5], vec![0.5, 1.0, 0.0, 0.5, 0.5, 1.0, 0.0]],
        edges.len(),
    )
    .unwrap();
    let quality = vec![vec![0.9, 0.2, 0.5, 0.7, 0.1, 0.4], vec![0.3, 0.8, 0.6, 0.2, 0.5, 0.9]];
    let graph = TaskGraph::with_node_quality(list, weights, &quality).unwrap();
    let claims: [&[usize]; 6] = [&[0], &[1], &[0, 1], &[0], &[1], &[0, 1]];
    let bidders = claims
        .iter()
        .enumerate()
        .map(|(v, c)| Bidder { node: v as u32, tasks: TaskSet::from_tasks(c.iter().copied()), bid: 1.0 + 0.1 * v as f64 })
        .collect();
    (graph, Market::new(bidders, 6, 2).unwrap())
}

/// Seed sets used against the desk instance.
pub fn desk_seed_sets() -> Vec<Vec<UserId>> {
    vec![vec![0], vec![2], vec![1, 4], vec![0, 3, 5], vec![0, 1, 2, 3, 4, 5]]
}
