//! Directed social graph with one weight layer per task, node locations on a
//! square grid, and a per-task quality value for every subarea.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub type NodeId = u32;
pub type EdgeId = u32;

/// Edges in input order. Edge `e` goes `sources[e] -> targets[e]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeList {
    node_count: usize,
    sources: Vec<NodeId>,
    targets: Vec<NodeId>,
    /// Third column of the input, present only if every line carried one.
    weights: Option<Vec<f64>>,
}

impl EdgeList {
    pub fn new(node_count: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut list = EdgeList {
            node_count,
            sources: Vec::with_capacity(edges.len()),
            targets: Vec::with_capacity(edges.len()),
            weights: None,
        };
        for &(u, v) in edges {
            let hi = u.max(v) as usize;
            if hi >= node_count {
                return Err(Error::domain(format!(
                    "edge ({u}, {v}) references node {hi} but node_count is {node_count}"
                )));
            }
            list.sources.push(u);
            list.targets.push(v);
        }
        if node_count == 0 {
            return Err(Error::domain("graph needs at least one node"));
        }
        Ok(list)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.sources.len()
    }

    pub fn edge(&self, e: EdgeId) -> (NodeId, NodeId) {
        (self.sources[e as usize], self.targets[e as usize])
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.sources.iter().copied().zip(self.targets.iter().copied())
    }

    pub fn input_weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for (u, v) in self.iter() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }
}

fn parse_id(tok: &str, line: usize) -> Result<NodeId> {
    if tok.starts_with('-') {
        return Err(Error::Parse { line, msg: format!("negative node id {tok:?}") });
    }
    tok.parse::<NodeId>()
        .map_err(|e| Error::Parse { line, msg: format!("bad node id {tok:?}: {e}") })
}

/// Reads `u v` or `u v w` lines with dense 0-based ids. `#` lines and blank
/// lines are skipped. Parallel edges and self-loops are kept.
pub fn load_edge_list<R: BufRead>(input: R, node_count_hint: Option<usize>) -> Result<EdgeList> {
    let mut sources = Vec::new();
    let mut targets = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut with_weight: Option<bool> = None;
    let mut max_id: Option<NodeId> = None;

    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 2 && toks.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected `u v` or `u v w`, got {} fields", toks.len()),
            });
        }
        let has_w = toks.len() == 3;
        match with_weight {
            None => with_weight = Some(has_w),
            Some(prev) if prev != has_w => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "weight column present on some lines but not others".into(),
                })
            }
            _ => {}
        }
        let u = parse_id(toks[0], lineno)?;
        let v = parse_id(toks[1], lineno)?;
        if has_w {
            let w: f64 = toks[2].parse().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad weight {:?}: {e}", toks[2]),
            })?;
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Parse { line: lineno, msg: format!("weight {w} outside [0,1]") });
            }
            weights.push(w);
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        sources.push(u);
        targets.push(v);
    }

    let seen = max_id.map_or(0, |m| m as usize + 1);
    let node_count = seen.max(node_count_hint.unwrap_or(0));
    if node_count == 0 {
        return Err(Error::domain("empty edge list and no node count hint"));
    }
    Ok(EdgeList {
        node_count,
        sources,
        targets,
        weights: if with_weight == Some(true) { Some(weights) } else { None },
    })
}

/// Dense relabelling of arbitrary external node tokens, in order of first
/// appearance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdMap {
    external: Vec<String>,
    internal: HashMap<String, NodeId>,
}

impl IdMap {
    pub fn intern(&mut self, token: &str) -> NodeId {
        if let Some(&id) = self.internal.get(token) {
            return id;
        }
        let id = self.external.len() as NodeId;
        self.external.push(token.to_owned());
        self.internal.insert(token.to_owned(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn external(&self, id: NodeId) -> Option<&str> {
        self.external.get(id as usize).map(String::as_str)
    }

    pub fn internal(&self, token: &str) -> Option<NodeId> {
        self.internal.get(token).copied()
    }

    /// Sidecar format: one `external_id internal_id` pair per line.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, ext) in self.external.iter().enumerate() {
            writeln!(out, "{ext} {i}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut map = IdMap::default();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let mut toks = line.split_whitespace();
            let (Some(ext), Some(int), None) = (toks.next(), toks.next(), toks.next()) else {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(Error::Parse { line: idx + 1, msg: "expected `external internal`".into() });
            };
            let int = parse_id(int, idx + 1)?;
            if int as usize != map.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("internal ids must be dense and ordered, got {int}"),
                });
            }
            map.intern(ext);
        }
        Ok(map)
    }
}

/// Reads an edge list whose node tokens are arbitrary strings, remapping them
/// to dense ids. Extra columns after the first two are ignored.
pub fn ingest_sparse_edge_list<R: BufRead>(input: R) -> Result<(EdgeList, IdMap)> {
    let mut map = IdMap::default();
    let mut edges = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let (Some(a), Some(b)) = (toks.next(), toks.next()) else {
            return Err(Error::Parse { line: idx + 1, msg: "expected at least two fields".into() });
        };
        let u = map.intern(a);
        let v = map.intern(b);
        edges.push((u, v));
    }
    if map.is_empty() {
        return Err(Error::domain("edge list contains no edges"));
    }
    let list = EdgeList::new(map.len(), &edges)?;
    Ok((list, map))
}

/// Compressed per-node adjacency: `(neighbor, edge id)` pairs, in edge-id order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adjacency {
    offsets: Vec<usize>,
    entries: Vec<(NodeId, EdgeId)>,
}

impl Adjacency {
    fn build(n: usize, edges: &EdgeList, forward: bool) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for (u, v) in edges.iter() {
            let key = if forward { u } else { v };
            offsets[key as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut entries = vec![(0, 0); edges.edge_count()];
        for (e, (u, v)) in edges.iter().enumerate() {
            let (key, other) = if forward { (u, v) } else { (v, u) };
            entries[cursor[key as usize]] = (other, e as EdgeId);
            cursor[key as usize] += 1;
        }
        Adjacency { offsets, entries }
    }

    #[inline]
    pub fn of(&self, v: NodeId) -> &[(NodeId, EdgeId)] {
        let v = v as usize;
        &self.entries[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }
}

/// Square area cut into equal square blocks; block index is row-major with
/// `x` varying fastest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationMap {
    area_side: f64,
    block_side: f64,
    per_side: usize,
}

impl LocationMap {
    pub fn new(area_side: f64, block_side: f64) -> Result<Self> {
        if !(area_side > 0.0 && area_side.is_finite()) || !(block_side > 0.0 && block_side.is_finite()) {
            return Err(Error::config(format!(
                "area_side ({area_side}) and block_side ({block_side}) must be positive"
            )));
        }
        let ratio = area_side / block_side;
        let per_side = ratio.round();
        if per_side < 1.0 || (ratio - per_side).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::config(format!(
                "block_side {block_side} does not divide area_side {area_side}"
            )));
        }
        Ok(LocationMap { area_side, block_side, per_side: per_side as usize })
    }

    pub fn area_side(&self) -> f64 {
        self.area_side
    }

    pub fn block_side(&self) -> f64 {
        self.block_side
    }

    pub fn subarea_count(&self) -> usize {
        self.per_side * self.per_side
    }

    /// Points on the upper boundary fall into the last row/column.
    pub fn subarea_of(&self, x: f64, y: f64) -> usize {
        let last = self.per_side - 1;
        let col = ((x / self.block_side).floor().max(0.0) as usize).min(last);
        let row = ((y / self.block_side).floor().max(0.0) as usize).min(last);
        col + self.per_side * row
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.area_side).contains(&x) && (0.0..=self.area_side).contains(&y)
    }
}

/// Per-task edge probabilities, `[task][edge]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights(Vec<Vec<f64>>);

impl LayerWeights {
    pub fn new(rows: Vec<Vec<f64>>, edge_count: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::domain("at least one task layer is required"));
        }
        for (j, row) in rows.iter().enumerate() {
            if row.len() != edge_count {
                return Err(Error::domain(format!(
                    "layer {j} has {} weights for {edge_count} edges",
                    row.len()
                )));
            }
            if let Some(w) = row.iter().find(|w| !(0.0..=1.0).contains(*w)) {
                return Err(Error::domain(format!("layer {j} weight {w} outside [0,1]")));
            }
        }
        Ok(LayerWeights(rows))
    }

    pub fn task_count(&self) -> usize {
        self.0.len()
    }

    pub fn layer(&self, task: usize) -> &[f64] {
        &self.0[task]
    }
}

/// Constant probability per task on every edge.
pub fn assign_uniform_layers(edges: &EdgeList, per_task_probability: &[f64]) -> Result<LayerWeights> {
    for (j, p) in per_task_probability.iter().enumerate() {
        if !(0.0..=1.0).contains(p) {
            return Err(Error::domain(format!("task {j} probability {p} outside [0,1]")));
        }
    }
    let m = edges.edge_count();
    LayerWeights::new(per_task_probability.iter().map(|&p| vec![p; m]).collect(), m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    edges: EdgeList,
    out_adj: Adjacency,
    in_adj: Adjacency,
    weights: LayerWeights,
    grid: LocationMap,
    locations: Vec<(f64, f64)>,
    subareas: Vec<u32>,
    /// `[task][subarea]`
    quality: Vec<Vec<f64>>,
    quality_mass: Vec<f64>,
}

impl TaskGraph {
    pub fn new(
        edges: EdgeList,
        weights: LayerWeights,
        grid: LocationMap,
        locations: Vec<(f64, f64)>,
        quality: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = edges.node_count();
        if weights.0.iter().any(|row| row.len() != edges.edge_count()) {
            return Err(Error::domain("weight layers do not match edge count"));
        }
        if locations.len() != n {
            return Err(Error::domain(format!("{} locations for {n} nodes", locations.len())));
        }
        if quality.len() != weights.task_count() {
            return Err(Error::domain(format!(
                "{} quality rows for {} tasks",
                quality.len(),
                weights.task_count()
            )));
        }
        for (j, row) in quality.iter().enumerate() {
            if row.len() != grid.subarea_count() {
                return Err(Error::domain(format!(
                    "quality row {j} has {} entries for {} subareas",
                    row.len(),
                    grid.subarea_count()
                )));
            }
            if let Some(q) = row.iter().find(|q| !(0.0..=1.0).contains(*q)) {
                return Err(Error::domain(format!("quality {q} of task {j} outside [0,1]")));
            }
        }
        let mut subareas = Vec::with_capacity(n);
        for (v, &(x, y)) in locations.iter().enumerate() {
            if !grid.contains(x, y) {
                return Err(Error::domain(format!("node {v} at ({x}, {y}) lies outside the area")));
            }
            subareas.push(grid.subarea_of(x, y) as u32);
        }
        let quality_mass = quality
            .iter()
            .map(|row| subareas.iter().map(|&k| row[k as usize]).sum())
            .collect();
        let out_adj = Adjacency::build(n, &edges, true);
        let in_adj = Adjacency::build(n, &edges, false);
        Ok(TaskGraph { edges, out_adj, in_adj, weights, grid, locations, subareas, quality, quality_mass })
    }

    /// All nodes in one subarea; quality of task `j` is `quality[j]` everywhere.
    pub fn with_uniform_quality(edges: EdgeList, weights: LayerWeights, quality: &[f64]) -> Result<Self> {
        let n = edges.node_count();
        let grid = LocationMap::new(1.0, 1.0)?;
        let quality = quality.iter().map(|&q| vec![q]).collect();
        TaskGraph::new(edges, weights, grid, vec![(0.0, 0.0); n], quality)
    }

    /// Gives every node its own subarea so that `node_quality[j][v]` is used
    /// verbatim. Handy for small hand-built instances.
    pub fn with_node_quality(edges: EdgeList, weights: LayerWeights, node_quality: &[Vec<f64>]) -> Result<Self> {
        let n = edges.node_count();
        let grid = LocationMap::new(n as f64, 1.0)?;
        let locations = (0..n).map(|v| (v as f64 + 0.5, 0.5)).collect();
        let mut quality = Vec::with_capacity(node_quality.len());
        for row in node_quality {
            if row.len() != n {
                return Err(Error::domain("node quality row length must equal node count"));
            }
            let mut full = vec![0.0; n * n];
            full[..n].copy_from_slice(row);
            quality.push(full);
        }
        TaskGraph::new(edges, weights, grid, locations, quality)
    }

    pub fn node_count(&self) -> usize {
        self.edges.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.edge_count()
    }

    pub fn task_count(&self) -> usize {
        self.weights.task_count()
    }

    pub fn edges(&self) -> &EdgeList {
        &self.edges
    }

    #[inline]
    pub fn out_edges(&self, v: NodeId) -> &[(NodeId, EdgeId)] {
        self.out_adj.of(v)
    }

    #[inline]
    pub fn in_edges(&self, v: NodeId) -> &[(NodeId, EdgeId)] {
        self.in_adj.of(v)
    }

    pub fn out_degree(&self, v: NodeId) -> usize {
        self.out_adj.degree(v)
    }

    #[inline]
    pub fn weight(&self, task: usize, e: EdgeId) -> f64 {
        self.weights.0[task][e as usize]
    }

    pub fn weights(&self) -> &LayerWeights {
        &self.weights
    }

    pub fn grid(&self) -> &LocationMap {
        &self.grid
    }

    pub fn location(&self, v: NodeId) -> (f64, f64) {
        self.locations[v as usize]
    }

    pub fn location_of(&self, v: NodeId) -> usize {
        self.subareas[v as usize] as usize
    }

    pub fn quality(&self, task: usize, subarea: usize) -> f64 {
        self.quality[task][subarea]
    }

    /// `q_j` of the subarea node `v` lives in.
    #[inline]
    pub fn node_quality(&self, task: usize, v: NodeId) -> f64 {
        self.quality[task][self.subareas[v as usize] as usize]
    }

    /// Sum of `node_quality(task, v)` over all nodes.
    pub fn task_quality_mass(&self, task: usize) -> f64 {
        self.quality_mass[task]
    }

    /// The same graph with only the layers listed in `keep`, in that order.
    pub fn restrict_tasks(&self, keep: &[usize]) -> Result<TaskGraph> {
        if let Some(&j) = keep.iter().find(|&&j| j >= self.task_count()) {
            return Err(Error::domain(format!("task {j} does not exist")));
        }
        let rows = keep.iter().map(|&j| self.weights.0[j].clone()).collect();
        let weights = LayerWeights::new(rows, self.edge_count())?;
        let quality = keep.iter().map(|&j| self.quality[j].clone()).collect();
        TaskGraph::new(self.edges.clone(), weights, self.grid, self.locations.clone(), quality)
    }

    /// One layer whose probability is the per-edge mean across tasks, with unit
    /// quality everywhere: plain influence spread.
    pub fn averaged_single_layer(&self) -> Result<TaskGraph> {
        let m = self.edge_count();
        let t = self.task_count() as f64;
        let avg: Vec<f64> = (0..m)
            .map(|e| self.weights.0.iter().map(|row| row[e]).sum::<f64>() / t)
            .map(|w: f64| w.clamp(0.0, 1.0))
            .collect();
        let weights = LayerWeights::new(vec![avg], m)?;
        TaskGraph::with_uniform_quality(self.edges.clone(), weights, &[1.0])
    }
}

/// Parameters for placing nodes and drawing subarea qualities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub area_side: f64,
    pub block_side: f64,
    /// Diffusion probability of each task's layer.
    pub tasks: Vec<f64>,
    pub quality_seed: u64,
    pub location_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            area_side: 1000.0,
            block_side: 100.0,
            tasks: vec![0.3, 0.5, 0.4, 0.4],
            quality_seed: 1,
            location_seed: 2,
        }
    }
}

const LOCATION_TAG: u64 = 0x4c4f43;
const QUALITY_TAG: u64 = 0x51414c;

/// Uniform node coordinates over the area and uniform `[0,1]` qualities per
/// (task, subarea). Pure in `(edges, config, rng_seed)`.
pub fn synthesize_scenario(edges: &EdgeList, config: &ScenarioConfig, rng_seed: u64) -> Result<TaskGraph> {
    let grid = LocationMap::new(config.area_side, config.block_side)?;
    if config.tasks.is_empty() {
        return Err(Error::config("at least one task probability is required"));
    }
    let weights = assign_uniform_layers(edges, &config.tasks)
        .map_err(|e| Error::config(e.to_string()))?;

    let mut loc_rng = rng::substream(rng::derive_seed(rng_seed, LOCATION_TAG), config.location_seed);
    let side = config.area_side;
    let locations = (0..edges.node_count())
        .map(|_| (loc_rng.random_range(0.0..=side), loc_rng.random_range(0.0..=side)))
        .collect();

    let mut q_rng = rng::substream(rng::derive_seed(rng_seed, QUALITY_TAG), config.quality_seed);
    let quality = (0..config.tasks.len())
        .map(|_| (0..grid.subarea_count()).map(|_| q_rng.random_range(0.0..=1.0)).collect())
        .collect();

    TaskGraph::new(edges.clone(), weights, grid, locations, quality)
}
