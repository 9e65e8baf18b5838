//! Command-line front end: benchmarks, tree building and inspection, and
//! the bound and expansion-rate calculators.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use triplet_nn::bench::{self, BenchError};
use triplet_nn::format::{self, METHOD_COMPTREE};
use triplet_nn::io::{load_dataset, DataError};
use triplet_nn::metric::MetricError;
use triplet_nn::synth::{vectors_to_csv, SynthError};
use triplet_nn::theory::{self, BoundReport, DomainError};
use triplet_nn::{
    BenchConfig, CompTree, CountingOracle, DataFormat, Dataset, Method, PartitionTree, Payload, PointId,
    Query, SyntheticKind,
};

#[derive(Parser)]
#[command(name = "triplet-nn", version, about = "Nearest-neighbor search from triplet comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark runs and synthetic data
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Build, inspect and query trees
    #[command(subcommand)]
    Tree(TreeCmd),
    /// Bound calculators and expansion-rate estimates
    #[command(subcommand)]
    Theory(TheoryCmd),
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Run every (method, n0, seed) row of a config file
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Evaluate rows and queries in parallel; output is identical
        #[arg(long)]
        parallel: bool,
        /// Overrides the config's `output`
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic vector dataset as headerless CSV
    Gen {
        #[arg(long)]
        kind: SyntheticKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset file
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "vector")]
    format: DataFormat,
    /// Skip the first CSV line
    #[arg(long)]
    header: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        Ok(load_dataset(&self.data, self.format, self.header)?)
    }
}

#[derive(Subcommand)]
enum TreeCmd {
    /// Build a tree over a dataset and save it as JSON
    Build {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "comptree")]
        method: String,
        #[arg(long)]
        n0: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print height, leaf sizes and triplet counts of a saved tree
    Stats {
        #[arg(long)]
        tree: PathBuf,
    },
    /// Search a saved tree
    Search {
        #[arg(long)]
        tree: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Stored point to search for
        #[arg(long, conflicts_with_all = ["leave_one_out", "query"])]
        point: Option<u32>,
        /// Stored point to search for, never returned as its own neighbor
        #[arg(long, conflicts_with = "query")]
        leave_one_out: Option<u32>,
        /// Out-of-sample query: comma-separated values, or a node label
        #[arg(long)]
        query: Option<String>,
        /// Rank this many leaf candidates (comparison trees only)
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Subcommand)]
enum TheoryCmd {
    /// Height bound, triplet budgets and, given C and alpha, the error bound
    Bounds {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        n0: usize,
        #[arg(long)]
        c_tilde: f64,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long = "big-c", requires = "alpha")]
        c: Option<f64>,
        #[arg(long, requires = "c")]
        alpha: Option<f64>,
    },
    /// Pointwise expansion rates over the whole dataset
    Expansion {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = theory::DEFAULT_SAMPLE_CAP)]
        sample_cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write `point_id,c_tilde` rows here
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Monte Carlo frequency of unbalanced root splits against 4·c̃²·δ
    SplitBalance {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use this c̃ instead of estimating it
        #[arg(long)]
        c_tilde: Option<f64>,
        #[arg(long, default_value_t = theory::DEFAULT_SAMPLE_CAP)]
        sample_cap: usize,
    },
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON output"));
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

enum AnyTree {
    Comp(CompTree),
    Partition(PartitionTree),
}

fn read_tree(path: &Path) -> Result<AnyTree> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let tree = if format::peek_method(&text)? == METHOD_COMPTREE {
        AnyTree::Comp(CompTree::from_json(&text)?)
    } else {
        AnyTree::Partition(PartitionTree::from_json(&text)?)
    };
    Ok(tree)
}

fn parse_query(ds: &Dataset, text: &str) -> Result<Payload> {
    Ok(match ds.kind() {
        triplet_nn::MetricKind::DenseVector => Payload::Vector(
            text.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| anyhow!("bad coordinate {s:?}")))
                .collect::<Result<_>>()?,
        ),
        triplet_nn::MetricKind::CategoricalTuple => Payload::Tuple(text.split(',').map(|s| s.trim().to_owned()).collect()),
        triplet_nn::MetricKind::GraphNode => {
            Payload::Node(text.trim().parse().map_err(|_| anyhow!("bad node label {text:?}"))?)
        }
    })
}

fn run_bench(cmd: BenchCmd) -> Result<()> {
    match cmd {
        BenchCmd::Run { config, parallel, output } => {
            let mut cfg = BenchConfig::load(&config)?;
            cfg.parallel |= parallel;
            let rows = bench::run_benchmark(&cfg)?;
            match output.or(cfg.output) {
                Some(path) => {
                    bench::write_outputs(&rows, &path)?;
                    eprintln!("wrote {} rows to {}", rows.len(), path.display());
                }
                None => print!("{}", bench::rows_to_csv(&rows)),
            }
        }
        BenchCmd::Gen { kind, n, dim, seed, out } => {
            let ds = triplet_nn::generate_synthetic(kind, n, dim, seed)?;
            write(&out, &vectors_to_csv(&ds).expect("synthetic data is vectors"))?;
        }
    }
    Ok(())
}

fn run_tree(cmd: TreeCmd) -> Result<()> {
    match cmd {
        TreeCmd::Build { data, method, n0, seed, out } => {
            let ds = data.load()?;
            let members: Vec<PointId> = ds.ids().collect();
            let method: Method = method.parse().map_err(|e: String| BenchError::Config(e))?;
            let text = match method {
                Method::CompTree => {
                    let oracle = CountingOracle::new(&ds);
                    CompTree::build(&members, n0, seed, &oracle).map_err(|e| BenchError::Config(e.to_string()))?.to_json()
                }
                Method::Baseline(kind) => PartitionTree::build(kind, &ds, &members, n0, seed)
                    .map_err(|e| BenchError::Config(e.to_string()))?
                    .to_json(),
                Method::Brute => bail!(BenchError::Config("brute force has no tree to build".into())),
            };
            write(&out, &text)?;
        }
        TreeCmd::Stats { tree } => match read_tree(&tree)? {
            AnyTree::Comp(t) => print_json(&t.stats()),
            AnyTree::Partition(t) => print_json(&t.stats()),
        },
        TreeCmd::Search { tree, data, point, leave_one_out, query, k } => {
            let ds = data.load()?;
            let query = match (point, leave_one_out, query) {
                (Some(p), _, _) => Query::Point(PointId(p)),
                (_, Some(p), _) => Query::LeaveOneOut(PointId(p)),
                (_, _, Some(text)) => Query::External(parse_query(&ds, &text)?),
                _ => bail!(BenchError::Config("one of --point, --leave-one-out or --query is required".into())),
            };
            let resolved = ds.resolve(&query)?;
            match read_tree(&tree)? {
                AnyTree::Comp(t) => {
                    if t.leaves().flat_map(|l| t.members(l)).any(|p| p.index() >= ds.len()) {
                        bail!(BenchError::Config(format!(
                            "{} does not match the dataset it was built on",
                            tree.display()
                        )));
                    }
                    let oracle = CountingOracle::new(&ds);
                    match k {
                        Some(k) => {
                            let r = t.leaf_candidates(&resolved, k, &oracle)?;
                            print_json(&json!({
                                "neighbors": r.ids,
                                "triplets_used": r.triplets_used,
                                "leaf_depth": r.leaf_depth,
                                "fallback": r.fallback,
                            }));
                        }
                        None => {
                            let r = t.search(&resolved, &oracle)?;
                            print_json(&json!({
                                "neighbor": r.neighbor,
                                "distance": ds.probe_distance(&resolved.probe, r.neighbor),
                                "triplets_used": r.triplets_used,
                                "leaf_depth": r.leaf_depth,
                                "leaf_size": r.leaf_size,
                                "fallback": r.fallback,
                            }));
                        }
                    }
                }
                AnyTree::Partition(t) => {
                    if k.is_some() {
                        bail!(BenchError::Config("--k needs a comparison tree".into()));
                    }
                    let coords = match &resolved.probe {
                        triplet_nn::Probe::Point(p) => ds.vector(*p).map(<[f64]>::to_vec),
                        triplet_nn::Probe::Vector(v) => Some(v.clone()),
                        triplet_nn::Probe::Codes(_) => None,
                    }
                    .ok_or_else(|| BenchError::Config(format!("{} trees need vector data", t.kind())))?;
                    let hit = t.defeatist_query(&ds, &coords, resolved.exclude)?;
                    print_json(&json!({
                        "neighbor": hit.neighbor,
                        "distance": hit.distance,
                        "leaf_depth": hit.leaf_depth,
                        "fallback": hit.fallback,
                    }));
                }
            }
        }
    }
    Ok(())
}

fn run_theory(cmd: TheoryCmd) -> Result<()> {
    match cmd {
        TheoryCmd::Bounds { n, n0, c_tilde, epsilon, c, alpha } => {
            print_json(&BoundReport::evaluate(n, n0, c_tilde, epsilon, c.zip(alpha))?);
        }
        TheoryCmd::Expansion { data, sample_cap, seed, csv } => {
            let ds = data.load()?;
            let all: Vec<PointId> = ds.ids().collect();
            let sample = theory::sample_members(&all, sample_cap, seed);
            let profile = theory::empirical_expansion_rate(&ds, &all, &sample)?;
            if let Some(path) = csv {
                write(&path, &profile.to_csv())?;
            }
            let mut values: Vec<f64> = profile.points.iter().map(|p| p.1).collect();
            values.sort_by(f64::total_cmp);
            let q = |f: f64| values[((values.len() - 1) as f64 * f).round() as usize];
            print_json(&json!({
                "dataset": ds.name(),
                "n": ds.len(),
                "sample_size": profile.sample_size,
                "dataset_max": profile.dataset_max,
                "min": q(0.0),
                "q1": q(0.25),
                "median": q(0.5),
                "q3": q(0.75),
            }));
        }
        TheoryCmd::SplitBalance { data, delta, trials, seed, c_tilde, sample_cap } => {
            let ds = data.load()?;
            let all: Vec<PointId> = ds.ids().collect();
            let c_tilde = match c_tilde {
                Some(c) => c,
                None => {
                    let sample = theory::sample_members(&all, sample_cap, seed);
                    theory::empirical_expansion_rate(&ds, &all, &sample)?.dataset_max
                }
            };
            let oracle = CountingOracle::new(&ds);
            let trial = theory::split_balance_trial(&oracle, &all, delta, trials, seed)?;
            let bound = (4.0 * c_tilde * c_tilde * delta).min(1.0);
            let allowance = theory::balance_allowance(c_tilde, delta, trials, 3.0);
            print_json(&json!({
                "set_size": trial.set_size,
                "delta": delta,
                "trials": trials,
                "unbalanced": trial.unbalanced,
                "fraction": trial.fraction,
                "c_tilde": c_tilde,
                "bound": bound,
                "bound_with_3_se": allowance,
                "holds": trial.fraction <= allowance,
            }));
        }
    }
    Ok(())
}

/// 2 for configuration and argument problems, 3 for unreadable or invalid
/// data, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(b) = cause.downcast_ref::<BenchError>() {
            return b.exit_code() as u8;
        }
        if cause.is::<DataError>() || cause.is::<MetricError>() || cause.is::<format::FormatError>() {
            return 3;
        }
        if cause.is::<DomainError>() || cause.is::<SynthError>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(cmd) => run_bench(cmd),
        Command::Tree(cmd) => run_tree(cmd),
        Command::Theory(cmd) => run_theory(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
