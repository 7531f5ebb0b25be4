//! Multi-task reverse-reachable (MT-RR) sets and the coverage estimator built
//! on them.
//!
//! A set is drawn by picking a task `j` uniformly, a root with probability
//! proportional to its quality `q_j(root)`, and then collecting every node that
//! reaches the root through live in-edges of layer `j`. For a collection of
//! `theta` sets the estimate of `f(S)` is
//!
//! ```text
//! f^(S) = (1/theta) * sum_x c_{j_x} * [S^{j_x} hits R_x]
//! ```
//!
//! with `c_j` the total quality mass of layer `j`.

use std::io::{Read, Write};

use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::weighted::WeightedAliasIndex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{NodeId, TaskGraph};
use crate::market::{Market, UserId};
use crate::rng::{self, Rng};

/// One reverse-reachable set together with the task it was drawn for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MtRrSet {
    pub task: usize,
    pub root: NodeId,
    /// Root first, then nodes in discovery order.
    pub nodes: Vec<NodeId>,
}

/// Scratch space for reverse BFS.
#[derive(Clone, Debug)]
pub struct ReverseScratch {
    stamp: Vec<u32>,
    epoch: u32,
}

impl ReverseScratch {
    pub fn new(node_count: usize) -> Self {
        ReverseScratch { stamp: vec![0; node_count], epoch: 0 }
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.epoch
    }
}

/// Per-task root distributions for one graph.
pub struct RrSampler<'g> {
    graph: &'g TaskGraph,
    roots: Vec<Option<WeightedAliasIndex<f64>>>,
}

impl<'g> RrSampler<'g> {
    pub fn new(graph: &'g TaskGraph) -> Result<Self> {
        let mut roots = Vec::with_capacity(graph.task_count());
        for j in 0..graph.task_count() {
            if graph.task_quality_mass(j) > 0.0 {
                let w: Vec<f64> = (0..graph.node_count() as NodeId).map(|v| graph.node_quality(j, v)).collect();
                let table = WeightedAliasIndex::new(w)
                    .map_err(|e| Error::domain(format!("root distribution of task {j}: {e}")))?;
                roots.push(Some(table));
            } else {
                roots.push(None);
            }
        }
        if roots.iter().all(Option::is_none) {
            return Err(Error::domain("every task has zero quality mass; the objective is identically 0"));
        }
        Ok(RrSampler { graph, roots })
    }

    /// Number of tasks with positive quality mass.
    pub fn live_task_count(&self) -> usize {
        self.roots.iter().filter(|r| r.is_some()).count()
    }

    pub fn sample(&self, rng: &mut Rng, scratch: &mut ReverseScratch) -> MtRrSet {
        let n_t = self.roots.len();
        let (task, table) = loop {
            let j = rng.random_range(0..n_t);
            if let Some(t) = &self.roots[j] {
                break (j, t);
            }
        };
        let root = table.sample(rng) as NodeId;
        let epoch = scratch.next_epoch();
        scratch.stamp[root as usize] = epoch;
        let mut nodes = vec![root];
        let mut head = 0;
        while head < nodes.len() {
            let v = nodes[head];
            head += 1;
            for &(u, e) in self.graph.in_edges(v) {
                if scratch.stamp[u as usize] == epoch {
                    continue;
                }
                let w = self.graph.weight(task, e);
                let live = w >= 1.0 || (w > 0.0 && rng.random::<f64>() < w);
                if live {
                    scratch.stamp[u as usize] = epoch;
                    nodes.push(u);
                }
            }
        }
        MtRrSet { task, root, nodes }
    }
}

/// Draws a single MT-RR set.
pub fn sample_mtrr(graph: &TaskGraph, rng: &mut Rng) -> Result<MtRrSet> {
    let sampler = RrSampler::new(graph)?;
    Ok(sampler.sample(rng, &mut ReverseScratch::new(graph.node_count())))
}

/// Borrowed view of a stored set.
#[derive(Clone, Copy, Debug)]
pub struct RrSetRef<'a> {
    pub task: usize,
    pub root: NodeId,
    pub nodes: &'a [NodeId],
}

const GENERATION_CHUNK: usize = 1 << 15;

/// Ordered collection of MT-RR sets with a node -> set inverted index.
/// Set `i` is always drawn from substream `i` of the collection's seed.
#[derive(Clone, Debug, PartialEq)]
pub struct RrCollection {
    seed: u64,
    node_count: usize,
    /// Per-task multiplier `c_j` (scaled by `n_live / n_T` when some tasks have
    /// zero quality mass and are never drawn).
    scale: Vec<f64>,
    tasks: Vec<u32>,
    roots: Vec<NodeId>,
    offsets: Vec<usize>,
    members: Vec<NodeId>,
    index: Vec<Vec<u32>>,
}

impl RrCollection {
    pub fn new(graph: &TaskGraph, seed: u64) -> Result<Self> {
        let sampler = RrSampler::new(graph)?;
        let n_t = graph.task_count() as f64;
        let live = sampler.live_task_count() as f64;
        let scale = (0..graph.task_count()).map(|j| graph.task_quality_mass(j) * live / n_t).collect();
        Ok(RrCollection {
            seed,
            node_count: graph.node_count(),
            scale,
            tasks: Vec::new(),
            roots: Vec::new(),
            offsets: vec![0],
            members: Vec::new(),
            index: vec![Vec::new(); graph.node_count()],
        })
    }

    pub fn generate(graph: &TaskGraph, seed: u64, theta: usize) -> Result<Self> {
        let mut c = RrCollection::new(graph, seed)?;
        c.extend(graph, theta)?;
        Ok(c)
    }

    /// Appends fresh sets until `target` sets are held. Existing sets are left
    /// untouched. Generation runs in parallel but lands in index order.
    pub fn extend(&mut self, graph: &TaskGraph, target: usize) -> Result<()> {
        if graph.node_count() != self.node_count || graph.task_count() != self.scale.len() {
            return Err(Error::domain("graph does not match the collection"));
        }
        if target <= self.len() {
            return Ok(());
        }
        let sampler = RrSampler::new(graph)?;
        let seed = self.seed;
        let mut start = self.len();
        while start < target {
            let end = (start + GENERATION_CHUNK).min(target);
            let batch: Vec<MtRrSet> = (start..end)
                .into_par_iter()
                .map_init(
                    || ReverseScratch::new(graph.node_count()),
                    |scratch, i| sampler.sample(&mut rng::substream(seed, i as u64), scratch),
                )
                .collect();
            for set in batch {
                self.push(set);
            }
            start = end;
        }
        Ok(())
    }

    fn push(&mut self, set: MtRrSet) {
        let id = self.tasks.len() as u32;
        self.tasks.push(set.task as u32);
        self.roots.push(set.root);
        for &v in &set.nodes {
            self.index[v as usize].push(id);
        }
        self.members.extend_from_slice(&set.nodes);
        self.offsets.push(self.members.len());
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `theta`.
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task_count(&self) -> usize {
        self.scale.len()
    }

    pub fn total_size(&self) -> usize {
        self.members.len()
    }

    #[inline]
    pub fn task_of(&self, x: usize) -> usize {
        self.tasks[x] as usize
    }

    pub fn set(&self, x: usize) -> RrSetRef<'_> {
        RrSetRef { task: self.tasks[x] as usize, root: self.roots[x], nodes: &self.members[self.offsets[x]..self.offsets[x + 1]] }
    }

    #[inline]
    pub fn nodes_of(&self, x: usize) -> &[NodeId] {
        &self.members[self.offsets[x]..self.offsets[x + 1]]
    }

    /// Indices of the sets that contain `node`, ascending.
    #[inline]
    pub fn sets_containing(&self, node: NodeId) -> &[u32] {
        &self.index[node as usize]
    }

    /// Multiplier applied to a covered set of `task`.
    #[inline]
    pub fn scale(&self, task: usize) -> f64 {
        self.scale[task]
    }

    /// Largest per-set multiplier; dividing by it maps every summand into [0, 1].
    pub fn max_scale(&self) -> f64 {
        self.scale.iter().copied().fold(0.0, f64::max)
    }

    /// Coverage estimate of `f(seeds)`.
    pub fn estimate(&self, market: &Market, seeds: &[UserId]) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::domain("cannot estimate from an empty collection"));
        }
        let mut covered = vec![false; self.len()];
        let mut sum = 0.0;
        for &u in seeds {
            let b = market.bidder(u);
            for &x in self.sets_containing(b.node) {
                let x = x as usize;
                let t = self.task_of(x);
                if b.tasks.contains(t) && !covered[x] {
                    covered[x] = true;
                    sum += self.scale[t];
                }
            }
        }
        Ok(sum / self.len() as f64)
    }

    /// Binary dump: `theta: u64`, `n_T: u32`, then per set `task: u32`,
    /// `root: u32`, `count: u32` and `count` node ids, all little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        out.write_all(&(self.task_count() as u32).to_le_bytes())?;
        for x in 0..self.len() {
            let s = self.set(x);
            out.write_all(&(s.task as u32).to_le_bytes())?;
            out.write_all(&s.root.to_le_bytes())?;
            out.write_all(&(s.nodes.len() as u32).to_le_bytes())?;
            for &v in s.nodes {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dump produced by [`write_to`](Self::write_to). `seed` is the
    /// seed further extensions continue from.
    pub fn read_from<R: Read>(mut input: R, graph: &TaskGraph, seed: u64) -> Result<Self> {
        fn u32_of<R: Read>(r: &mut R) -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        }
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8)?;
        let theta = u64::from_le_bytes(b8) as usize;
        let n_t = u32_of(&mut input)? as usize;
        if n_t != graph.task_count() {
            return Err(Error::domain(format!("dump has {n_t} tasks, graph has {}", graph.task_count())));
        }
        let mut c = RrCollection::new(graph, seed)?;
        for _ in 0..theta {
            let task = u32_of(&mut input)? as usize;
            let root = u32_of(&mut input)?;
            let count = u32_of(&mut input)? as usize;
            let mut nodes = Vec::with_capacity(count);
            for _ in 0..count {
                let v = u32_of(&mut input)?;
                if v as usize >= graph.node_count() {
                    return Err(Error::domain(format!("node id {v} out of range in dump")));
                }
                nodes.push(v);
            }
            if task >= n_t || nodes.first() != Some(&root) {
                return Err(Error::domain("malformed set in dump"));
            }
            c.push(MtRrSet { task, root, nodes });
        }
        Ok(c)
    }
}

/// Incremental coverage of a growing seed set over a fixed collection.
///
/// For every registered user and task it keeps the number of not-yet-covered
/// sets of that task containing the user's node (only for claimed tasks), so
/// marginal gains are exact sums of integer counts.
#[derive(Clone, Debug)]
pub struct Coverage<'a> {
    rr: &'a RrCollection,
    market: &'a Market,
    n_t: usize,
    covered: Vec<bool>,
    counts: Vec<u32>,
    covered_by_task: Vec<u64>,
    selected: Vec<bool>,
    seeds: Vec<UserId>,
}

impl<'a> Coverage<'a> {
    pub fn new(rr: &'a RrCollection, market: &'a Market) -> Self {
        assert_eq!(rr.task_count(), market.task_count(), "collection and market disagree on task count");
        let n_t = rr.task_count();
        let mut counts = vec![0u32; market.len() * n_t];
        for (u, b) in market.bidders().iter().enumerate() {
            for &x in rr.sets_containing(b.node) {
                let t = rr.task_of(x as usize);
                if b.tasks.contains(t) {
                    counts[u * n_t + t] += 1;
                }
            }
        }
        Coverage {
            rr,
            market,
            n_t,
            covered: vec![false; rr.len()],
            counts,
            covered_by_task: vec![0; n_t],
            selected: vec![false; market.len()],
            seeds: Vec::new(),
        }
    }

    pub fn collection(&self) -> &'a RrCollection {
        self.rr
    }

    pub fn market(&self) -> &'a Market {
        self.market
    }

    /// `f^(S + u) - f^(S)`; 0 for users already in `S`.
    #[inline]
    pub fn gain(&self, u: UserId) -> f64 {
        let row = &self.counts[u * self.n_t..(u + 1) * self.n_t];
        let mut g = 0.0;
        for (t, &c) in row.iter().enumerate() {
            if c != 0 {
                g += self.rr.scale(t) * c as f64;
            }
        }
        g / self.rr.len() as f64
    }

    /// Whether `u` would cover at least one uncovered set.
    #[inline]
    pub fn has_gain(&self, u: UserId) -> bool {
        self.counts[u * self.n_t..(u + 1) * self.n_t].iter().any(|&c| c != 0)
    }

    /// `f^(S)`.
    pub fn value(&self) -> f64 {
        let s: f64 = self.covered_by_task.iter().enumerate().map(|(t, &c)| self.rr.scale(t) * c as f64).sum();
        s / self.rr.len() as f64
    }

    pub fn covered_sets(&self) -> u64 {
        self.covered_by_task.iter().sum()
    }

    pub fn is_selected(&self, u: UserId) -> bool {
        self.selected[u]
    }

    pub fn seeds(&self) -> &[UserId] {
        &self.seeds
    }

    pub fn add(&mut self, u: UserId) {
        if self.selected[u] {
            return;
        }
        self.selected[u] = true;
        self.seeds.push(u);
        let b = *self.market.bidder(u);
        for &x in self.rr.sets_containing(b.node) {
            let x = x as usize;
            let t = self.rr.task_of(x);
            if self.covered[x] || !b.tasks.contains(t) {
                continue;
            }
            self.covered[x] = true;
            self.covered_by_task[t] += 1;
            for &w in self.rr.nodes_of(x) {
                if let Some(wu) = self.market.user_of(w) {
                    if self.market.claims(wu).contains(t) {
                        self.counts[wu * self.n_t + t] -= 1;
                    }
                }
            }
        }
    }
}

/// `f^(S + v) - f^(S)` where `coverage` holds the state of `S`.
pub fn marginal_gain(coverage: &Coverage<'_>, v: UserId) -> f64 {
    coverage.gain(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{assign_uniform_layers, EdgeList};
    use crate::market::{Bidder, TaskSet};

    fn single_edge(w: f64) -> TaskGraph {
        let e = EdgeList::new(2, &[(0, 1)]).unwrap();
        TaskGraph::with_uniform_quality(e.clone(), assign_uniform_layers(&e, &[w]).unwrap(), &[1.0]).unwrap()
    }

    #[test]
    fn lone_node_set() {
        let e = EdgeList::new(1, &[]).unwrap();
        let g = TaskGraph::with_uniform_quality(e.clone(), assign_uniform_layers(&e, &[0.5]).unwrap(), &[0.7]).unwrap();
        let s = sample_mtrr(&g, &mut rng::substream(1, 1)).unwrap();
        assert_eq!(s, MtRrSet { task: 0, root: 0, nodes: vec![0] });
    }

    #[test]
    fn deterministic_layer_gives_full_reverse_reach() {
        let e = EdgeList::new(4, &[(0, 1), (1, 2), (3, 3)]).unwrap();
        let g = TaskGraph::with_node_quality(e.clone(), assign_uniform_layers(&e, &[1.0]).unwrap(), &[vec![0.0, 0.0, 1.0, 0.0]])
            .unwrap();
        for i in 0..20 {
            let mut s = sample_mtrr(&g, &mut rng::substream(3, i)).unwrap();
            assert_eq!(s.root, 2);
            s.nodes.sort_unstable();
            assert_eq!(s.nodes, vec![0, 1, 2]);
        }
    }

    #[test]
    fn zero_mass_everywhere_is_an_error() {
        let g = single_edge(0.5);
        let g0 = TaskGraph::with_uniform_quality(g.edges().clone(), g.weights().clone(), &[0.0]).unwrap();
        assert!(matches!(sample_mtrr(&g0, &mut rng::substream(0, 0)), Err(Error::Domain(_))));
    }

    #[test]
    fn single_edge_membership_law() {
        // root is b with prob 1/2 and the edge is live with prob 1/2
        let g = single_edge(0.5);
        let sampler = RrSampler::new(&g).unwrap();
        let mut scratch = ReverseScratch::new(2);
        let n = 100_000;
        let hits = (0..n)
            .filter(|&i| {
                let s = sampler.sample(&mut rng::substream(42, i), &mut scratch);
                s.root == 1 && s.nodes.contains(&0)
            })
            .count();
        let p = hits as f64 / n as f64;
        assert!((p - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / n as f64).sqrt(), "{p}");
    }

    #[test]
    fn estimate_cases() {
        let g = single_edge(1.0);
        let m = Market::new(vec![Bidder { node: 0, tasks: TaskSet::from_tasks([0]), bid: 1.0 }], 2, 1).unwrap();
        let rr = RrCollection::generate(&g, 5, 50).unwrap();
        assert_eq!(rr.estimate(&m, &[]).unwrap(), 0.0);
        // node 0 reaches both nodes deterministically: f({0}) = 2
        assert!((rr.estimate(&m, &[0]).unwrap() - 2.0).abs() < 1e-12);
        let empty = RrCollection::new(&g, 5).unwrap();
        assert!(empty.estimate(&m, &[0]).is_err());
    }

    #[test]
    fn extend_is_prefix_stable() {
        let g = single_edge(0.5);
        let mut a = RrCollection::generate(&g, 9, 100).unwrap();
        let snapshot = a.clone();
        a.extend(&g, 100).unwrap();
        assert_eq!(a, snapshot);
        a.extend(&g, 250).unwrap();
        let b = RrCollection::generate(&g, 9, 250).unwrap();
        assert_eq!(a, b);
        for x in 0..100 {
            assert_eq!(a.set(x).nodes, snapshot.set(x).nodes);
        }
    }

    #[test]
    fn dump_roundtrip() {
        let g = single_edge(0.5);
        let a = RrCollection::generate(&g, 2, 64).unwrap();
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], &64u64.to_le_bytes());
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        let b = RrCollection::read_from(&buf[..], &g, 2).unwrap();
        assert_eq!(a, b);
        assert!(RrCollection::read_from(&buf[..20], &g, 2).is_err());
    }

    #[test]
    fn coverage_tracks_gains() {
        let g = single_edge(1.0);
        let m = Market::new(
            vec![
                Bidder { node: 0, tasks: TaskSet::from_tasks([0]), bid: 1.0 },
                Bidder { node: 1, tasks: TaskSet::from_tasks([0]), bid: 1.0 },
            ],
            2,
            1,
        )
        .unwrap();
        let rr = RrCollection::generate(&g, 1, 40).unwrap();
        let mut cov = Coverage::new(&rr, &m);
        // node 0 is in every set
        assert!((cov.gain(0) - 2.0).abs() < 1e-12);
        cov.add(0);
        assert!((cov.value() - 2.0).abs() < 1e-12);
        assert_eq!(marginal_gain(&cov, 1), 0.0);
        assert_eq!(cov.gain(0), 0.0);
        assert!(!cov.has_gain(1));
    }
}
