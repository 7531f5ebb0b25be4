//! Batch execution of (trial x budget x algorithm) cells and CSV output.

use std::fs::{self, File};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use mtcrowd::auction::{run_auction_split, truthfulness_probe, PaymentRule};
use mtcrowd::diffusion::mc_estimate;
use mtcrowd::market::UserId;
use mtcrowd::rng;
use mtcrowd::rrset::RrCollection;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{run_baseline, BaselineParams};
use crate::config::{Algorithm, ExperimentConfig};
use crate::scenario::{build_scenario, load_skeleton, Scenario};

const EVAL_TAG: u64 = 0x4556;
const ALGORITHM_TAG: u64 = 0x414c;
const AUCTION_TAG: u64 = 0x4155;
const PAYMENT_TAG: u64 = 0x5041;
const PROBE_TAG: u64 = 0x5052;
const TRIPLE_TAG: u64 = 0x5452;

/// Tolerance of the utility comparisons in truthfulness probes.
pub const PROBE_TOLERANCE: f64 = 1e-9;
/// Tolerance of the submodularity and monotonicity checks.
pub const PROPERTY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub budget: f64,
    pub seed: u64,
    pub f_standard: f64,
    pub f_estimated: Option<f64>,
    pub set_size: usize,
    pub ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuctionRow {
    pub seed: u64,
    pub budget: f64,
    pub user: UserId,
    pub node: u32,
    pub won: bool,
    pub bid: f64,
    pub payment: f64,
    pub critical_trace_max: Option<f64>,
    pub utility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRow {
    pub seed: u64,
    pub budget: f64,
    pub round: usize,
    pub theta: usize,
    pub f_hat: f64,
    pub f_low: f64,
    pub f_up: f64,
    pub ratio: f64,
    pub ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRow {
    pub seed: u64,
    pub budget: f64,
    pub user: UserId,
    pub cost: f64,
    pub bid: f64,
    pub won: bool,
    pub payment: f64,
    pub utility: f64,
}

/// Pass/fail tally of one invariant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyRow {
    pub property: String,
    pub checked: u64,
    pub violations: u64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tally {
    pub individual_rationality: (u64, u64),
    pub budget_feasibility: (u64, u64),
    pub monotonicity: (u64, u64),
    pub submodularity: (u64, u64),
    pub truthfulness: (u64, u64),
    pub utility_shape: (u64, u64),
}

impl Tally {
    fn merge(&mut self, o: &Tally) {
        let add = |a: &mut (u64, u64), b: &(u64, u64)| {
            a.0 += b.0;
            a.1 += b.1;
        };
        add(&mut self.individual_rationality, &o.individual_rationality);
        add(&mut self.budget_feasibility, &o.budget_feasibility);
        add(&mut self.monotonicity, &o.monotonicity);
        add(&mut self.submodularity, &o.submodularity);
        add(&mut self.truthfulness, &o.truthfulness);
        add(&mut self.utility_shape, &o.utility_shape);
    }

    pub fn rows(&self) -> Vec<PropertyRow> {
        [
            ("individual_rationality", self.individual_rationality),
            ("budget_feasibility", self.budget_feasibility),
            ("estimate_monotonicity", self.monotonicity),
            ("estimate_submodularity", self.submodularity),
            ("truthful_bid_is_optimal", self.truthfulness),
            ("winner_utility_step_shape", self.utility_shape),
        ]
        .into_iter()
        .map(|(name, (checked, violations))| PropertyRow {
            property: name.to_string(),
            checked,
            violations,
            passed: violations == 0,
        })
        .collect()
    }
}

/// Which parts of the protocol to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Parts {
    pub baselines: bool,
    pub auction: bool,
    pub properties: bool,
}

impl Parts {
    pub const ALL: Parts = Parts { baselines: true, auction: true, properties: true };
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteOutput {
    pub records: Vec<RunRecord>,
    pub auctions: Vec<AuctionRow>,
    pub rounds: Vec<RoundRow>,
    pub probes: Vec<ProbeRow>,
    pub tally: Tally,
}

impl SuiteOutput {
    pub fn all_properties_hold(&self) -> bool {
        self.tally.rows().iter().all(|r| r.passed)
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs every trial (in parallel) and gathers outputs in trial order.
pub fn run_suite(cfg: &ExperimentConfig, parts: Parts) -> Result<SuiteOutput> {
    cfg.validate()?;
    let skeleton = load_skeleton(&cfg.dataset)?;
    let trials: Vec<SuiteOutput> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let scenario = build_scenario(&skeleton, cfg, cfg.trial_seed(t))?;
            run_trial(cfg, &scenario, parts)
        })
        .collect::<Result<_>>()?;
    let mut out = SuiteOutput::default();
    for t in trials {
        out.records.extend(t.records);
        out.auctions.extend(t.auctions);
        out.rounds.extend(t.rounds);
        out.probes.extend(t.probes);
        out.tally.merge(&t.tally);
    }
    Ok(out)
}

fn baseline_params(cfg: &ExperimentConfig, compare: bool) -> BaselineParams {
    BaselineParams {
        greedy_sims: cfg.greedy_sims,
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        compare_best_singleton: compare,
    }
}

/// All cells of one scenario.
pub fn run_trial(cfg: &ExperimentConfig, scenario: &Scenario, parts: Parts) -> Result<SuiteOutput> {
    let seed = scenario.seed;
    let mut out = SuiteOutput::default();
    let eval_seed = rng::derive_seed(seed, EVAL_TAG);
    let params = baseline_params(cfg, cfg.compare_best_singleton);
    let mut triple_rr = None;

    if parts.baselines {
        for &budget in &cfg.budgets {
            for &alg in &cfg.algorithms {
                let started = Instant::now();
                let alg_seed = rng::derive_seed(seed, ALGORITHM_TAG + alg as u64);
                let sel = run_baseline(alg, scenario, budget, &params, alg_seed)?;
                let ms = ms_since(started);
                let f = mc_estimate(&scenario.graph, &scenario.market, &sel.seeds, cfg.standard_sims, eval_seed).mean;
                out.tally.budget_feasibility.0 += 1;
                out.tally.budget_feasibility.1 += (sel.spent > budget) as u64;
                if alg == Algorithm::ModifiedOpimc {
                    out.rounds.extend(sel.rounds.iter().map(|r| RoundRow {
                        seed,
                        budget,
                        round: r.round,
                        theta: r.theta,
                        f_hat: r.f_hat,
                        f_low: r.f_low,
                        f_up: r.f_up,
                        ratio: r.ratio,
                        ms: r.elapsed.as_secs_f64() * 1e3,
                    }));
                    if triple_rr.is_none() {
                        triple_rr = sel.collection;
                    }
                }
                out.records.push(RunRecord {
                    algorithm: alg,
                    budget,
                    seed,
                    f_standard: f,
                    f_estimated: sel.estimate,
                    set_size: sel.seeds.len(),
                    ms,
                });
            }
        }
    }

    if parts.auction || parts.properties {
        for &budget in &cfg.auction.budgets {
            let rr = auction_collection(cfg, scenario, budget)?;
            let Some(rr) = rr else { continue };
            auction_cell(cfg, scenario, budget, &rr, &mut out)?;
            if triple_rr.is_none() {
                triple_rr = Some(rr);
            }
        }
    }

    if parts.properties {
        let rr = match triple_rr {
            Some(rr) => rr,
            None => RrCollection::generate(&scenario.graph, rng::derive_seed(seed, TRIPLE_TAG), 2000)?,
        };
        check_triples(cfg, scenario, &rr, &mut out.tally);
    }
    Ok(out)
}

/// The collection the auction selects on: Modified-OPIM-C's for this budget.
fn auction_collection(cfg: &ExperimentConfig, scenario: &Scenario, budget: f64) -> Result<Option<RrCollection>> {
    let params = baseline_params(cfg, cfg.auction.compare_best_singleton);
    let sel = run_baseline(Algorithm::ModifiedOpimc, scenario, budget, &params, rng::derive_seed(scenario.seed, AUCTION_TAG))?;
    Ok(sel.collection)
}

fn auction_cell(cfg: &ExperimentConfig, scenario: &Scenario, budget: f64, rr: &RrCollection, out: &mut SuiteOutput) -> Result<()> {
    let seed = scenario.seed;
    let market = &scenario.market;
    let rule: PaymentRule = cfg.auction.payment_rule.into();
    let fresh;
    let price_rr = if cfg.auction.resample_payment {
        fresh = RrCollection::generate(&scenario.graph, rng::derive_seed(seed, PAYMENT_TAG), rr.len())?;
        &fresh
    } else {
        rr
    };
    let outcome = run_auction_split(rr, price_rr, market, budget, rule)?;
    out.tally.budget_feasibility.0 += 1;
    out.tally.budget_feasibility.1 += (outcome.total_bid > budget) as u64;
    for u in 0..market.len() {
        let i = outcome.winners.iter().position(|&w| w == u);
        let payment = i.map_or(0.0, |i| outcome.payments[i].amount);
        if i.is_some() {
            out.tally.individual_rationality.0 += 1;
            out.tally.individual_rationality.1 += (payment < market.bid(u)) as u64;
        }
        out.auctions.push(AuctionRow {
            seed,
            budget,
            user: u,
            node: market.bidder(u).node,
            won: i.is_some(),
            bid: market.bid(u),
            payment,
            critical_trace_max: i.map(|i| outcome.payments[i].critical_trace_max()).filter(|x| x.is_finite()),
            utility: outcome.utility(u, scenario.costs.cost(u)),
        });
    }

    let probes = cfg.auction.probe_users.min(market.len());
    if probes > 0 && rule == PaymentRule::Critical && !cfg.auction.resample_payment {
        let mut r = rng::substream(rng::derive_seed(seed, PROBE_TAG), budget.to_bits());
        let mut users = sample(&mut r, market.len(), probes).into_vec();
        users.sort_unstable();
        for u in users {
            probe_user(cfg, scenario, budget, rr, u, outcome.is_winner(u), out)?;
        }
    }
    Ok(())
}

/// Sweeps `u`'s bid over an even grid reaching past both twice its cost and
/// half again its truthful payment.
fn probe_user(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    budget: f64,
    rr: &RrCollection,
    u: UserId,
    truthful_win: bool,
    out: &mut SuiteOutput,
) -> Result<()> {
    let market = &scenario.market;
    let cost = scenario.costs.cost(u);
    let points = cfg.auction.probe_points.max(2);
    let truthful = truthfulness_probe(rr, market, &scenario.costs, u, &[market.bid(u)], budget)?[0];
    let top = (2.0 * cost).max(1.5 * truthful.payment);
    let grid: Vec<f64> = (1..=points).map(|i| top * i as f64 / points as f64).collect();
    let curve = truthfulness_probe(rr, market, &scenario.costs, u, &grid, budget)?;
    let best = curve.iter().map(|p| p.utility).fold(f64::NEG_INFINITY, f64::max);
    out.tally.truthfulness.0 += 1;
    out.tally.truthfulness.1 += (best > truthful.utility + PROBE_TOLERANCE) as u64;
    if truthful_win {
        out.tally.utility_shape.0 += 1;
        out.tally.utility_shape.1 += !is_step(&curve, truthful.utility) as u64;
    }
    out.probes.extend(curve.iter().map(|p| ProbeRow {
        seed: scenario.seed,
        budget,
        user: u,
        cost,
        bid: p.bid,
        won: p.won,
        payment: p.payment,
        utility: p.utility,
    }));
    Ok(())
}

/// A winner's curve: utility equal to `level` while winning, winning exactly on
/// a prefix of the (ascending) grid, 0 afterwards.
pub fn is_step(curve: &[mtcrowd::auction::ProbePoint], level: f64) -> bool {
    let wins = curve.iter().take_while(|p| p.won).count();
    curve[..wins].iter().all(|p| (p.utility - level).abs() <= PROBE_TOLERANCE)
        && curve[wins..].iter().all(|p| !p.won && p.utility == 0.0)
}

/// Random `A ⊆ B`, `v ∉ B` triples checked on the estimator.
fn check_triples(cfg: &ExperimentConfig, scenario: &Scenario, rr: &RrCollection, tally: &mut Tally) {
    let market = &scenario.market;
    let n = market.len();
    if n < 2 {
        return;
    }
    let mut r = rng::substream(rng::derive_seed(scenario.seed, TRIPLE_TAG), 1);
    let est = |s: &[UserId]| rr.estimate(market, s).expect("users are registered");
    for _ in 0..cfg.property_triples {
        let v = r.random_range(0..n);
        let size = r.random_range(0..n.min(30));
        let b: Vec<UserId> = sample(&mut r, n, size).into_iter().filter(|&u| u != v).collect();
        let a: Vec<UserId> = b.iter().copied().filter(|_| r.random_bool(0.5)).collect();
        let with = |s: &[UserId]| {
            let mut s = s.to_vec();
            s.push(v);
            s
        };
        let (fa, fb) = (est(&a), est(&b));
        let (ga, gb) = (est(&with(&a)) - fa, est(&with(&b)) - fb);
        tally.monotonicity.0 += 1;
        tally.monotonicity.1 += (fa > fb + PROPERTY_TOLERANCE || gb < -PROPERTY_TOLERANCE) as u64;
        tally.submodularity.0 += 1;
        tally.submodularity.1 += (ga < gb - PROPERTY_TOLERANCE) as u64;
    }
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T], header: &[&str]) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(header).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub const RUN_RECORD_COLUMNS: &[&str] = &["algorithm", "budget", "seed", "f_standard", "f_estimated", "set_size", "ms"];
pub const AUCTION_COLUMNS: &[&str] =
    &["seed", "budget", "user", "node", "won", "bid", "payment", "critical_trace_max", "utility"];
pub const ROUND_COLUMNS: &[&str] = &["seed", "budget", "round", "theta", "f_hat", "f_low", "f_up", "ratio", "ms"];
pub const PROBE_COLUMNS: &[&str] = &["seed", "budget", "user", "cost", "bid", "won", "payment", "utility"];
pub const PROPERTY_COLUMNS: &[&str] = &["property", "checked", "violations", "passed"];

/// Writes the CSVs selected by `parts` into `dir`.
pub fn write_outputs(dir: &Path, out: &SuiteOutput, parts: Parts) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    if parts.baselines {
        write_csv(dir, "run_records.csv", &out.records, RUN_RECORD_COLUMNS)?;
        write_csv(dir, "opimc_rounds.csv", &out.rounds, ROUND_COLUMNS)?;
    }
    if parts.auction {
        write_csv(dir, "auction_outcomes.csv", &out.auctions, AUCTION_COLUMNS)?;
        write_csv(dir, "truthfulness_probe.csv", &out.probes, PROBE_COLUMNS)?;
    }
    if parts.properties {
        write_csv(dir, "properties_report.csv", &out.tally.rows(), PROPERTY_COLUMNS)?;
    }
    Ok(())
}
