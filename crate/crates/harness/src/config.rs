//! Experiment configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use mtcrowd::auction::PaymentRule;
use mtcrowd::graph::ScenarioConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Greedy,
    ModifiedOpimc,
    GreedyIm,
    Opimc,
    MaxDegree,
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Greedy,
        Algorithm::ModifiedOpimc,
        Algorithm::GreedyIm,
        Algorithm::Opimc,
        Algorithm::MaxDegree,
        Algorithm::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::ModifiedOpimc => "modified-opimc",
            Algorithm::GreedyIm => "greedy-im",
            Algorithm::Opimc => "opimc",
            Algorithm::MaxDegree => "max-degree",
            Algorithm::Random => "random",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match Algorithm::ALL.iter().find(|a| a.name() == s) {
            Some(&a) => Ok(a),
            None => bail!("unknown algorithm {s:?}; expected one of {:?}", Algorithm::ALL.map(Algorithm::name)),
        }
    }
}

/// Where the social graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Edge-list file. Relative paths are resolved against the config file.
    EdgeList {
        path: PathBuf,
        /// Ids are arbitrary tokens and get remapped to dense ids.
        #[serde(default)]
        sparse_ids: bool,
    },
    /// Directed preferential-attachment graph.
    Synthetic {
        nodes: usize,
        #[serde(default = "default_mean_degree")]
        mean_out_degree: f64,
        #[serde(default = "default_graph_seed")]
        seed: u64,
    },
}

fn default_mean_degree() -> f64 {
    1.5
}

fn default_graph_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuctionConfig {
    pub budgets: Vec<f64>,
    /// Compare the ratio-greedy winners with the best affordable singleton.
    pub compare_best_singleton: bool,
    /// Price winners on a fresh collection instead of the selection one.
    pub resample_payment: bool,
    pub payment_rule: PaymentRuleName,
    /// Users per cell whose utility is swept over a bid grid.
    pub probe_users: usize,
    pub probe_points: usize,
}

impl Default for AuctionConfig {
    fn default() -> Self {
        AuctionConfig {
            budgets: vec![50.0],
            compare_best_singleton: false,
            resample_payment: false,
            payment_rule: PaymentRuleName::Critical,
            probe_users: 0,
            probe_points: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaymentRuleName {
    Critical,
    Uncapped,
}

impl From<PaymentRuleName> for PaymentRule {
    fn from(r: PaymentRuleName) -> Self {
        match r {
            PaymentRuleName::Critical => PaymentRule::Critical,
            PaymentRuleName::Uncapped => PaymentRule::Uncapped,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    /// Share of nodes that register as bidders.
    pub registered_fraction: f64,
    pub budgets: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub master_seed: u64,
    /// Independent scenario draws per cell.
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_standard_sims")]
    pub standard_sims: usize,
    #[serde(default = "default_greedy_sims")]
    pub greedy_sims: usize,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    #[serde(default = "default_eps")]
    pub delta: f64,
    /// Budgeted coverage of the standalone runs compares with the best singleton.
    #[serde(default = "yes")]
    pub compare_best_singleton: bool,
    /// Random submodularity triples checked per scenario.
    #[serde(default = "default_triples")]
    pub property_triples: usize,
    #[serde(default)]
    pub auction: AuctionConfig,
}

fn default_trials() -> usize {
    1
}
fn default_standard_sims() -> usize {
    2000
}
fn default_greedy_sims() -> usize {
    500
}
fn default_eps() -> f64 {
    0.1
}
fn yes() -> bool {
    true
}
fn default_triples() -> usize {
    200
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let DatasetConfig::EdgeList { path: p, .. } = &mut cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ru = self.registered_fraction;
        ensure!(ru > 0.0 && ru <= 1.0, "registered_fraction {ru} must lie in (0, 1]");
        ensure!(!self.budgets.is_empty(), "budgets must not be empty");
        ensure!(self.budgets.iter().all(|&d| d > 0.0 && d.is_finite()), "budgets must be positive");
        ensure!(!self.algorithms.is_empty(), "algorithms must not be empty");
        ensure!(self.trials >= 1, "trials must be at least 1");
        ensure!(self.standard_sims >= 1 && self.greedy_sims >= 1, "simulation counts must be at least 1");
        ensure!(self.epsilon > 0.0 && self.epsilon < 1.0, "epsilon must lie in (0, 1)");
        ensure!(self.delta > 0.0 && self.delta < 1.0, "delta must lie in (0, 1)");
        let tasks = self.scenario.tasks.len();
        ensure!((1..=mtcrowd::TaskSet::MAX_TASKS).contains(&tasks), "between 1 and 64 tasks are supported");
        ensure!(self.auction.budgets.iter().all(|&d| d > 0.0 && d.is_finite()), "auction budgets must be positive");
        if let DatasetConfig::Synthetic { nodes, mean_out_degree, .. } = self.dataset {
            ensure!(nodes >= 2, "a synthetic graph needs at least 2 nodes");
            ensure!(mean_out_degree >= 0.0 && mean_out_degree.is_finite(), "mean_out_degree must be >= 0");
        }
        Ok(())
    }

    /// Seed of trial `t`.
    pub fn trial_seed(&self, t: usize) -> u64 {
        mtcrowd::rng::derive_seed(self.master_seed, t as u64)
    }
}
