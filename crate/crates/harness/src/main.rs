use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mtcrowd::graph::{ingest_sparse_edge_list, load_edge_list};
use mtcrowd_harness::scenario::{build_scenario, load_skeleton};
use mtcrowd_harness::{report, run_suite, write_outputs, ExperimentConfig, Parts};

#[derive(Parser)]
#[command(name = "mtcrowd", version, about = "Multi-task diffusion seeding and budgeted auctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an edge list to dense ids.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Ids are arbitrary tokens; write an id map next to the edges.
        #[arg(long)]
        sparse: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the graph and the first trial's scenario.
    Synth(Common),
    /// Run every algorithm, the auction and the property checks.
    Run(Common),
    /// Run only the auctions and truthfulness probes.
    Auction {
        #[command(flatten)]
        common: Common,
        /// Auction budgets, replacing the config's.
        #[arg(long = "budget")]
        budgets: Vec<f64>,
    },
    /// Run only the property checks.
    Verify(Common),
    /// Aggregate the CSVs in a run directory.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn ingest(input: &Path, sparse: bool, out: &Path) -> Result<()> {
    let reader = BufReader::new(File::open(input).with_context(|| format!("opening {}", input.display()))?);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let edges = if sparse {
        let (edges, ids) = ingest_sparse_edge_list(reader).with_context(|| format!("reading {}", input.display()))?;
        ids.write_to(create(&out.join("id_map.txt"))?)?;
        edges
    } else {
        load_edge_list(reader, None).with_context(|| format!("reading {}", input.display()))?
    };
    edges.write_to(create(&out.join("edges.txt"))?)?;
    println!("{} nodes, {} edges", edges.node_count(), edges.edge_count());
    Ok(())
}

fn synth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let skeleton = load_skeleton(&cfg.dataset)?;
    skeleton.write_to(create(&out.join("edges.txt"))?)?;
    let s = build_scenario(&skeleton, cfg, cfg.trial_seed(0))?;
    let mut nodes = create(&out.join("nodes.csv"))?;
    writeln!(nodes, "node,x,y,subarea,out_degree")?;
    for v in 0..s.graph.node_count() as u32 {
        let (x, y) = s.graph.location(v);
        writeln!(nodes, "{v},{x},{y},{},{}", s.graph.location_of(v), s.graph.out_degree(v))?;
    }
    nodes.flush()?;
    let mut users = create(&out.join("users.csv"))?;
    writeln!(users, "user,node,tasks,bid")?;
    for (u, b) in s.market.bidders().iter().enumerate() {
        let tasks: Vec<String> = b.tasks.iter().map(|t| s.kept_tasks[t].to_string()).collect();
        writeln!(users, "{u},{},{},{}", b.node, tasks.join(";"), b.bid)?;
    }
    users.flush()?;
    println!("{} nodes, {} edges, {} registered users", s.graph.node_count(), s.graph.edge_count(), s.market.len());
    Ok(())
}

fn suite(cfg: &ExperimentConfig, out: &Path, parts: Parts) -> Result<ExitCode> {
    let result = run_suite(cfg, parts)?;
    write_outputs(out, &result, parts)?;
    if parts.properties {
        for row in result.tally.rows() {
            println!("{:<28} checked {:>8}  violations {:>4}", row.property, row.checked, row.violations);
        }
        if !result.all_properties_hold() {
            eprintln!("property checks failed; see {}", out.join("properties_report.csv").display());
            return Ok(ExitCode::FAILURE);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { input, sparse, out } => ingest(&input, sparse, &out).map(|_| ExitCode::SUCCESS),
        Command::Synth(common) => synth(&load(&common)?, &common.out).map(|_| ExitCode::SUCCESS),
        Command::Run(common) => suite(&load(&common)?, &common.out, Parts::ALL),
        Command::Auction { common, budgets } => {
            let mut cfg = load(&common)?;
            if !budgets.is_empty() {
                cfg.auction.budgets = budgets;
            }
            suite(&cfg, &common.out, Parts { baselines: false, auction: true, properties: false })
        }
        Command::Verify(common) => {
            suite(&load(&common)?, &common.out, Parts { baselines: false, auction: false, properties: true })
        }
        Command::Report { out } => {
            for f in report::write_reports(&out)? {
                println!("wrote {}", out.join(f).display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
