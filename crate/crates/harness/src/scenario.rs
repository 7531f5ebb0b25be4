//! Scenario generation: graph skeleton, node placement, registered users,
//! their claimed tasks and bids.

use std::fs::File;
use std::io::BufReader;

use anyhow::{Context, Result};
use mtcrowd::auction::CostProfile;
use mtcrowd::graph::{ingest_sparse_edge_list, load_edge_list, synthesize_scenario, EdgeList, TaskGraph};
use mtcrowd::market::{Bidder, Market, TaskSet};
use mtcrowd::rng;
use rand::seq::index::sample;
use rand::Rng;

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::synth::preferential_attachment;

const USERS_TAG: u64 = 0x5553;

/// Reads or generates the graph skeleton named by the dataset section.
pub fn load_skeleton(dataset: &DatasetConfig) -> Result<EdgeList> {
    match dataset {
        DatasetConfig::EdgeList { path, sparse_ids } => {
            let file = File::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
            let reader = BufReader::new(file);
            let edges = if *sparse_ids {
                ingest_sparse_edge_list(reader).map(|(e, _)| e)
            } else {
                load_edge_list(reader, None)
            };
            edges.with_context(|| format!("reading dataset {}", path.display()))
        }
        &DatasetConfig::Synthetic { nodes, mean_out_degree, seed } => {
            Ok(preferential_attachment(nodes, mean_out_degree, seed))
        }
    }
}

/// One fully specified experiment instance.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub seed: u64,
    pub graph: TaskGraph,
    pub market: Market,
    /// Private costs; equal to the bids (truthful reports).
    pub costs: CostProfile,
    /// Index into the configured task list of every task kept in `graph`.
    pub kept_tasks: Vec<usize>,
}

/// Places nodes, draws qualities, registers `registered_fraction` of the
/// nodes uniformly without replacement, lets each claim every task with
/// probability 1/2 (redrawn while empty) and bid `|T_i|` times a unit price
/// uniform in `[0.8, 1.2]`. Tasks nobody claimed are dropped.
pub fn build_scenario(skeleton: &EdgeList, cfg: &ExperimentConfig, seed: u64) -> Result<Scenario> {
    let graph = synthesize_scenario(skeleton, &cfg.scenario, seed)?;
    let n = graph.node_count();
    let n_t = graph.task_count();
    let n_r = ((cfg.registered_fraction * n as f64).round() as usize).clamp(1, n);
    let mut r = rng::substream(rng::derive_seed(seed, USERS_TAG), 0);
    let mut nodes = sample(&mut r, n, n_r).into_vec();
    nodes.sort_unstable();
    let mut bidders = Vec::with_capacity(n_r);
    for node in nodes {
        let mut tasks = TaskSet::empty();
        while tasks.is_empty() {
            tasks = TaskSet::from_tasks((0..n_t).filter(|_| r.random_bool(0.5)));
        }
        let unit: f64 = r.random_range(0.8..=1.2);
        bidders.push(Bidder { node: node as u32, tasks, bid: tasks.len() as f64 * unit });
    }

    let claimed = bidders.iter().fold(TaskSet::empty(), |acc, b| acc.union(b.tasks));
    let kept: Vec<usize> = claimed.iter().collect();
    let (graph, bidders) = if kept.len() == n_t {
        (graph, bidders)
    } else {
        let renumber = |t: TaskSet| TaskSet::from_tasks(kept.iter().enumerate().filter(|(_, &j)| t.contains(j)).map(|(i, _)| i));
        let bidders = bidders.into_iter().map(|b| Bidder { tasks: renumber(b.tasks), ..b }).collect();
        (graph.restrict_tasks(&kept)?, bidders)
    };
    let market = Market::new(bidders, n, kept.len())?;
    let costs = CostProfile::truthful(&market);
    Ok(Scenario { seed, graph, market, costs, kept_tasks: kept })
}
