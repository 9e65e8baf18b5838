//! Benchmark runs: one row per (method, n0, seed) with both error measures
//! and the triplet budgets.
//!
//! Configs are flat `key = value` text:
//!
//! ```text
//! # comments start with '#'
//! dataset = gauss.csv          # relative to the config file
//! format = vector              # vector | categorical | graph
//! header = false
//! methods = comptree, kdtree, brute
//! n0 = 4, 64
//! seeds = 0, 1, 2
//! mode = leave-one-out         # leave-one-out | holdout
//! holdout_size = 1000
//! query_cap = 2000             # optional; leave-one-out only
//! output = results.csv
//! parallel = false
//! ```

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{
    evaluate, ground_truth, leave_one_out_queries, map_ordered, miss_probability, relative_distance_error, BuiltIndex,
    EvalError, Method,
};
use crate::io::{load_dataset, DataError, DataFormat};
use crate::metric::{Dataset, Nearest, PointId, Probe, ResolvedQuery};
use crate::oracle::CountingOracle;
use crate::rng;

/// First line of every CSV this module writes.
pub const CSV_BANNER: &str = "# triplet-nn bench v1";

/// Columns whose values depend on the machine.
pub const WALL_TIME_COLUMNS: [&str; 2] = ["wall_time_build", "wall_time_query"];

const HOLDOUT_STREAM: u64 = 0x0068_6f6c_646f_7574;
const QUERY_CAP_STREAM: u64 = 0x7175_6572_7963_6170;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    LeaveOneOut,
    Holdout,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::LeaveOneOut => "leave-one-out",
            Mode::Holdout => "holdout",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "leave-one-out" | "loo" => Ok(Mode::LeaveOneOut),
            "holdout" => Ok(Mode::Holdout),
            other => Err(format!("unknown mode {other:?} (expected leave-one-out or holdout)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub dataset: PathBuf,
    pub format: DataFormat,
    pub header: bool,
    pub methods: Vec<Method>,
    pub n0: Vec<usize>,
    pub seeds: Vec<u64>,
    pub mode: Mode,
    pub holdout_size: usize,
    pub query_cap: Option<usize>,
    pub output: Option<PathBuf>,
    pub parallel: bool,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
}

impl BenchError {
    /// Process exit code: 2 for configuration problems, 3 for bad data.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Data(_) => 3,
            BenchError::Eval(_) | BenchError::Output { .. } => 1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> BenchError {
    BenchError::Config(msg.into())
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, BenchError>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| config_err(format!("{key}: {e}"))))
        .collect()
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T, BenchError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| config_err(format!("{key}: {e}")))
}

impl BenchConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<BenchConfig, BenchError> {
        let mut values: HashMap<String, String> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| config_err(format!("line {}: expected `key = value`", i + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            if values.insert(key.clone(), value.trim().to_owned()).is_some() {
                return Err(config_err(format!("line {}: duplicate key {key:?}", i + 1)));
            }
        }
        let mut take = |k: &str| values.remove(k);
        let dataset = base.join(take("dataset").ok_or_else(|| config_err("missing key `dataset`"))?);
        let format = take("format").map_or(Ok(DataFormat::Vector), |v| scalar("format", &v))?;
        let header = take("header").map_or(Ok(false), |v| scalar("header", &v))?;
        let methods_raw = take("methods").or_else(|| take("method")).ok_or_else(|| config_err("missing key `methods`"))?;
        let methods: Vec<Method> = list("methods", &methods_raw)?;
        let n0: Vec<usize> = list("n0", &take("n0").ok_or_else(|| config_err("missing key `n0`"))?)?;
        let seeds: Vec<u64> = take("seeds").map_or(Ok(vec![0]), |v| list("seeds", &v))?;
        let mode = take("mode").map_or(Ok(Mode::LeaveOneOut), |v| scalar("mode", &v))?;
        let holdout_size = take("holdout_size").map_or(Ok(1000), |v| scalar("holdout_size", &v))?;
        let query_cap = take("query_cap").map(|v| scalar("query_cap", &v)).transpose()?;
        let output = take("output").map(|v| base.join(v));
        let parallel = take("parallel").map_or(Ok(false), |v| scalar("parallel", &v))?;
        if let Some(k) = values.keys().min() {
            return Err(config_err(format!("unknown key {k:?}")));
        }
        let config =
            BenchConfig { dataset, format, header, methods, n0, seeds, mode, holdout_size, query_cap, output, parallel };
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<BenchConfig, BenchError> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn check(&self) -> Result<(), BenchError> {
        if self.methods.is_empty() {
            return Err(config_err("at least one method is required"));
        }
        if self.n0.is_empty() || self.n0.contains(&0) {
            return Err(config_err("n0 values must be listed and at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("at least one seed is required"));
        }
        if self.query_cap == Some(0) {
            return Err(config_err("query_cap must be at least 1"));
        }
        if self.mode == Mode::Holdout && self.holdout_size == 0 {
            return Err(config_err("holdout_size must be at least 1"));
        }
        Ok(())
    }
}

/// One benchmark measurement. Optional columns are empty when they do not
/// apply to the method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub dataset: String,
    pub method: String,
    pub mode: String,
    pub n0: usize,
    pub seed: u64,
    pub queries: usize,
    pub miss_probability: f64,
    pub relative_distance_error: Option<f64>,
    pub excluded_zero_distance_queries: usize,
    pub fallback_queries: usize,
    pub build_triplets: Option<u64>,
    /// Duplicate-pivot probes, not part of `build_triplets`.
    pub extra_build_triplets: Option<u64>,
    pub mean_query_triplets: Option<f64>,
    pub max_query_triplets: Option<u64>,
    pub tree_height: Option<usize>,
    /// Comparison trees only: query triplets within `height + n0 - 1` and
    /// build triplets within `n * height`.
    pub within_budget: Option<bool>,
    pub wall_time_build: f64,
    pub wall_time_query: f64,
}

struct Workload {
    members: Vec<PointId>,
    queries: Vec<(PointId, ResolvedQuery)>,
    truth: Vec<Nearest>,
}

fn workload(dataset: &Dataset, config: &BenchConfig, seed: u64) -> Result<Workload, BenchError> {
    let n = dataset.len();
    let all: Vec<PointId> = dataset.ids().collect();
    let (members, queries) = match config.mode {
        Mode::LeaveOneOut => {
            if n < 2 {
                return Err(EvalError::TooSmall(n).into());
            }
            let ids = match config.query_cap {
                Some(cap) if cap < n => {
                    let mut rng = rng::stream(seed, QUERY_CAP_STREAM);
                    let mut ids: Vec<PointId> = index::sample(&mut rng, n, cap).into_iter().map(PointId::from).collect();
                    ids.sort_unstable();
                    ids
                }
                _ => all.clone(),
            };
            (all, leave_one_out_queries(&ids))
        }
        Mode::Holdout => {
            if config.holdout_size >= n {
                return Err(config_err(format!("holdout_size {} must be below n = {n}", config.holdout_size)));
            }
            let mut rng = rng::stream(seed, HOLDOUT_STREAM);
            let mut test: Vec<usize> = index::sample(&mut rng, n, config.holdout_size).into_vec();
            test.sort_unstable();
            let mut is_test = vec![false; n];
            test.iter().for_each(|&i| is_test[i] = true);
            let members = all.iter().copied().filter(|p| !is_test[p.index()]).collect();
            let queries = test
                .into_iter()
                .map(|i| (PointId::from(i), ResolvedQuery { probe: Probe::Point(PointId::from(i)), exclude: None }))
                .collect();
            (members, queries)
        }
    };
    let plain: Vec<ResolvedQuery> = queries.iter().map(|q| q.1.clone()).collect();
    let truth = ground_truth(dataset, &members, &plain, config.parallel)?;
    Ok(Workload { members, queries, truth })
}

fn measure(
    dataset: &Dataset,
    work: &Workload,
    method: Method,
    n0: usize,
    seed: u64,
    config: &BenchConfig,
) -> Result<BenchRow, BenchError> {
    let oracle = CountingOracle::new(dataset);
    let t0 = Instant::now();
    let index = BuiltIndex::build(method, dataset, &work.members, n0, seed, &oracle)?;
    let wall_time_build = t0.elapsed().as_secs_f64();
    if let (Some(bt), Some(extra)) = (index.build_triplets(), index.extra_triplets()) {
        if bt + extra != oracle.count() {
            return Err(EvalError::Accounting { oracle: oracle.count(), reported: bt + extra }.into());
        }
    }
    let t1 = Instant::now();
    let records = evaluate(dataset, &index, &work.queries, &work.truth, &oracle, config.parallel)?;
    let wall_time_query = t1.elapsed().as_secs_f64();

    let (rde, excluded) = match relative_distance_error(&records) {
        Ok((m, e)) => (Some(m), e),
        Err(_) => (None, records.len()),
    };
    let triplets: Vec<u64> = records.iter().filter_map(|r| r.triplets).collect();
    let (mean_q, max_q) = if triplets.is_empty() {
        (None, None)
    } else {
        (Some(triplets.iter().sum::<u64>() as f64 / triplets.len() as f64), triplets.iter().max().copied())
    };
    let height = index.height();
    let within_budget = match (method, height, max_q, index.build_triplets()) {
        (Method::CompTree, Some(h), Some(mq), Some(bt)) => {
            Some(mq < (h + n0) as u64 && bt <= (work.members.len() * h) as u64)
        }
        _ => None,
    };
    Ok(BenchRow {
        dataset: dataset.name().to_owned(),
        method: method.to_string(),
        mode: config.mode.to_string(),
        n0,
        seed,
        queries: records.len(),
        miss_probability: miss_probability(&records),
        relative_distance_error: rde,
        excluded_zero_distance_queries: excluded,
        fallback_queries: records.iter().filter(|r| r.fallback).count(),
        build_triplets: index.build_triplets(),
        extra_build_triplets: index.extra_triplets(),
        mean_query_triplets: mean_q,
        max_query_triplets: max_q,
        tree_height: height,
        within_budget,
        wall_time_build,
        wall_time_query,
    })
}

/// Runs a benchmark over an already loaded dataset.
pub fn run_on(dataset: &Dataset, config: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    config.check()?;
    for &m in &config.methods {
        if !m.supports(dataset.kind()) {
            return Err(config_err(format!("method {m} cannot run on {} data", dataset.kind())));
        }
    }
    // Leave-one-out ground truth does not depend on the seed unless queries
    // are capped.
    let seed_free = config.mode == Mode::LeaveOneOut && config.query_cap.is_none_or(|c| c >= dataset.len());
    let mut workloads: HashMap<u64, Workload> = HashMap::new();
    for &seed in &config.seeds {
        if seed_free && !workloads.is_empty() {
            break;
        }
        workloads.entry(seed).or_insert(workload(dataset, config, seed)?);
    }
    let first = config.seeds[0];
    let mut jobs = Vec::new();
    for &method in &config.methods {
        for &n0 in &config.n0 {
            for &seed in &config.seeds {
                jobs.push((method, n0, seed));
            }
        }
    }
    map_ordered(&jobs, config.parallel, |&(method, n0, seed)| {
        let work = &workloads[if seed_free { &first } else { &seed }];
        measure(dataset, work, method, n0, seed, config)
    })
    .into_iter()
    .collect()
}

/// Loads the configured dataset and runs every (method, n0, seed) row.
pub fn run_benchmark(config: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    config.check()?;
    let dataset = load_dataset(&config.dataset, config.format, config.header)?;
    run_on(&dataset, config)
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).expect("rows serialize to CSV");
    }
    if rows.is_empty() {
        writer.serialize(BenchRow::blank()).expect("rows serialize to CSV");
    }
    let mut body = String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("CSV is UTF-8");
    if rows.is_empty() {
        body.truncate(body.find('\n').map_or(body.len(), |i| i + 1));
    }
    format!("{CSV_BANNER}\n{body}")
}

pub fn rows_from_csv(text: &str) -> Result<Vec<BenchRow>, csv::Error> {
    let body = text.strip_prefix(CSV_BANNER).unwrap_or(text).trim_start_matches('\n');
    csv::Reader::from_reader(body.as_bytes()).deserialize().collect()
}

impl BenchRow {
    fn blank() -> BenchRow {
        BenchRow {
            dataset: String::new(),
            method: String::new(),
            mode: String::new(),
            n0: 0,
            seed: 0,
            queries: 0,
            miss_probability: 0.0,
            relative_distance_error: None,
            excluded_zero_distance_queries: 0,
            fallback_queries: 0,
            build_triplets: None,
            extra_build_triplets: None,
            mean_query_triplets: None,
            max_query_triplets: None,
            tree_height: None,
            within_budget: None,
            wall_time_build: 0.0,
            wall_time_query: 0.0,
        }
    }
}

/// Writes `path` as CSV and a JSON mirror next to it (`.json` extension).
pub fn write_outputs(rows: &[BenchRow], path: &Path) -> Result<(), BenchError> {
    let out = |p: &Path, text: String| fs::write(p, text).map_err(|source| BenchError::Output { path: p.into(), source });
    out(path, rows_to_csv(rows))?;
    out(&path.with_extension("json"), serde_json::to_string_pretty(rows).expect("rows serialize to JSON") + "\n")
}

/// Blanks the wall-time columns of a CSV produced by [`rows_to_csv`], for
/// comparisons that must ignore timing.
pub fn strip_wall_times(csv_text: &str) -> String {
    let mut lines = csv_text.lines();
    let mut out = String::new();
    let mut drop = Vec::new();
    for line in lines.by_ref() {
        if line.starts_with('#') {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        drop = cols.iter().enumerate().filter(|(_, c)| WALL_TIME_COLUMNS.contains(c)).map(|(i, _)| i).collect();
        out.push_str(line);
        out.push('\n');
        break;
    }
    for line in lines {
        let cols: Vec<&str> = line.split(',').enumerate().map(|(i, c)| if drop.contains(&i) { "" } else { c }).collect();
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::BaselineKind;

    fn config(methods: &str, mode: &str) -> BenchConfig {
        BenchConfig::parse(
            &format!("dataset = x.csv\nmethods = {methods}\nn0 = 2, 8\nseeds = 0, 1\nmode = {mode}\nholdout_size = 5"),
            Path::new("/base"),
        )
        .unwrap()
    }

    #[test]
    fn parse_defaults_and_paths() {
        let c = config("comptree, kdtree", "holdout");
        assert_eq!(c.dataset, PathBuf::from("/base/x.csv"));
        assert_eq!(c.methods, vec![Method::CompTree, Method::Baseline(BaselineKind::KdTree)]);
        assert_eq!((c.n0.clone(), c.seeds.clone(), c.mode), (vec![2, 8], vec![0, 1], Mode::Holdout));
        assert_eq!(c.format, DataFormat::Vector);
        assert!(!c.parallel);
    }

    #[test]
    fn parse_errors() {
        let base = Path::new(".");
        for bad in [
            "methods = brute\nn0 = 1",
            "dataset = a\nmethods = brute\nn0 = 0",
            "dataset = a\nmethods = vp\nn0 = 1",
            "dataset = a\nmethods = brute\nn0 = 1\nseeds = ",
            "dataset = a\nmethods = brute\nn0 = 1\ncolour = red",
            "dataset = a\nmethods = brute\nn0 = 1\nn0 = 2",
            "dataset a",
        ] {
            let err = BenchConfig::parse(bad, base).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad:?} gave {err}");
        }
    }

    #[test]
    fn brute_rows_are_exact_without_triplets() {
        let ds = Dataset::from_line("l", &[0.0, 1.0, 3.0, 3.5, 9.0, 9.0, 12.0, 20.0]);
        let rows = run_on(&ds, &config("brute", "leave-one-out")).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert_eq!(r.miss_probability, 0.0);
            assert_eq!(r.mean_query_triplets, None);
            assert_eq!(r.relative_distance_error, Some(0.0));
        }
    }

    #[test]
    fn holdout_rows_and_pairing() {
        let ds = Dataset::from_line("l", &(0..30).map(|i| (i * i) as f64).collect::<Vec<_>>());
        let rows = run_on(&ds, &config("comptree, rptree", "holdout")).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.queries == 5));
        assert!(rows.iter().filter(|r| r.method == "comptree").all(|r| r.within_budget == Some(true)));

        let g = Dataset::from_graph("g", crate::graph::Graph::from_edges(&[(0, 1, 1.0), (1, 2, 1.0)]).unwrap());
        let err = run_on(&g, &config("kdtree", "leave-one-out")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let mut c = config("brute", "holdout");
        c.holdout_size = 3;
        assert_eq!(run_on(&g, &c).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn csv_strip_blanks_times() {
        let ds = Dataset::from_line("l", &[0.0, 1.0, 3.0, 3.5]);
        let rows = run_on(&ds, &config("comptree", "leave-one-out")).unwrap();
        let csv = rows_to_csv(&rows);
        assert!(csv.starts_with("# triplet-nn bench v1\ndataset,method,"));
        let stripped = strip_wall_times(&csv);
        assert!(stripped.lines().nth(2).unwrap().ends_with(",,"));
        assert_eq!(rows_from_csv(&csv).unwrap(), rows);
        assert_eq!(rows_to_csv(&[]).lines().count(), 2);
    }
}
