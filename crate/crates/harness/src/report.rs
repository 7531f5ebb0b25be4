//! Aggregates over the CSVs a run leaves behind.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Deserialize)]
struct RecordIn {
    algorithm: String,
    budget: f64,
    seed: u64,
    f_standard: f64,
    f_estimated: Option<f64>,
    set_size: usize,
}

#[derive(Clone, Debug, Deserialize)]
struct AuctionIn {
    seed: u64,
    budget: f64,
    won: bool,
    bid: f64,
    payment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub budget: f64,
    pub trials: usize,
    pub mean_f_standard: f64,
    pub mean_set_size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapRow {
    pub seed: u64,
    pub budget: f64,
    pub f_estimated: f64,
    pub f_standard: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverpaymentRow {
    pub seed: u64,
    pub budget: f64,
    pub winners: usize,
    pub total_bid: f64,
    pub total_payment: f64,
    /// Empty when nobody won.
    pub overpayment_ratio: Option<f64>,
}

fn read<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("reading {}", path.display()))
}

fn bits(x: f64) -> u64 {
    x.to_bits()
}

/// Mean standard value and seed-set size per (algorithm, budget).
pub fn summarize(records_csv: &Path) -> Result<Vec<SummaryRow>> {
    let records: Vec<RecordIn> = read(records_csv)?;
    let mut groups: BTreeMap<(String, u64), (f64, usize, f64)> = BTreeMap::new();
    let mut order = Vec::new();
    for r in &records {
        let key = (r.algorithm.clone(), bits(r.budget));
        let g = groups.entry(key.clone()).or_insert_with(|| {
            order.push((key, r.budget));
            (0.0, 0, 0.0)
        });
        g.0 += r.f_standard;
        g.1 += 1;
        g.2 += r.set_size as f64;
    }
    Ok(order
        .into_iter()
        .map(|(key, budget)| {
            let (f, n, size) = groups[&key];
            SummaryRow { algorithm: key.0, budget, trials: n, mean_f_standard: f / n as f64, mean_set_size: size / n as f64 }
        })
        .collect())
}

/// Estimated against standard value of every Modified-OPIM-C cell.
pub fn estimation_gap(records_csv: &Path) -> Result<Vec<GapRow>> {
    let records: Vec<RecordIn> = read(records_csv)?;
    Ok(records
        .into_iter()
        .filter(|r| r.algorithm == "modified-opimc")
        .filter_map(|r| {
            let est = r.f_estimated?;
            let abs_gap = (est - r.f_standard).abs();
            let rel_gap = if r.f_standard > 0.0 { abs_gap / r.f_standard } else { 0.0 };
            Some(GapRow { seed: r.seed, budget: r.budget, f_estimated: est, f_standard: r.f_standard, abs_gap, rel_gap })
        })
        .collect())
}

/// Totals and overpayment ratio of every auction cell.
pub fn overpayment(auctions_csv: &Path) -> Result<Vec<OverpaymentRow>> {
    let rows: Vec<AuctionIn> = read(auctions_csv)?;
    let mut out: Vec<OverpaymentRow> = Vec::new();
    for r in rows {
        let same = out.last().is_some_and(|o| o.seed == r.seed && o.budget == r.budget);
        if !same {
            out.push(OverpaymentRow {
                seed: r.seed,
                budget: r.budget,
                winners: 0,
                total_bid: 0.0,
                total_payment: 0.0,
                overpayment_ratio: None,
            });
        }
        let o = out.last_mut().expect("pushed above");
        if r.won {
            o.winners += 1;
            o.total_bid += r.bid;
            o.total_payment += r.payment;
        }
    }
    for o in &mut out {
        o.overpayment_ratio = mtcrowd::auction::overpayment_ratio(o.total_payment, o.total_bid);
    }
    Ok(out)
}

fn write<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes summary.csv, estimation_gap.csv and overpayment.csv next to
/// whichever inputs exist in `dir`. Returns the files written.
pub fn write_reports(dir: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let records = dir.join("run_records.csv");
    if records.exists() {
        write(&dir.join("summary.csv"), &summarize(&records)?)?;
        write(&dir.join("estimation_gap.csv"), &estimation_gap(&records)?)?;
        written.extend(["summary.csv".to_string(), "estimation_gap.csv".to_string()]);
    }
    let auctions = dir.join("auction_outcomes.csv");
    if auctions.exists() {
        write(&dir.join("overpayment.csv"), &overpayment(&auctions)?)?;
        written.push("overpayment.csv".to_string());
    }
    anyhow::ensure!(!written.is_empty(), "no run_records.csv or auction_outcomes.csv in {}", dir.display());
    Ok(written)
}
