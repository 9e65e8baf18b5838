//! Evaluation protocols: ground truth, leave-one-out miss probability and
//! relative distance error.
//!
//! This layer reads raw distances to judge answers; the indexes it drives
//! do not.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{BaselineError, BaselineKind, PartitionTree};
use crate::comptree::{BuildError, CompTree, SearchError};
use crate::metric::{brute_force_nn, Dataset, MetricError, MetricKind, Nearest, PointId, Probe, ResolvedQuery};
use crate::oracle::CountingOracle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    CompTree,
    Baseline(BaselineKind),
    Brute,
}

impl Method {
    pub fn supports(self, kind: MetricKind) -> bool {
        !matches!(self, Method::Baseline(_)) || kind == MetricKind::DenseVector
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::CompTree => f.write_str("comptree"),
            Method::Baseline(b) => b.fmt(f),
            Method::Brute => f.write_str("brute"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "comptree" => Ok(Method::CompTree),
            "brute" => Ok(Method::Brute),
            other => other
                .parse()
                .map(Method::Baseline)
                .map_err(|_| format!("unknown method {other:?} (expected comptree, kdtree, rptree, patree or brute)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("need at least two points, have {0}")]
    TooSmall(usize),
    #[error("every query coincides with an indexed point; relative distance error is undefined")]
    AllExcluded,
    #[error("triplet accounting mismatch: oracle counted {oracle}, reports sum to {reported}")]
    Accounting { oracle: u64, reported: u64 },
}

#[derive(Debug)]
pub enum Index {
    Comp(CompTree),
    Partition(PartitionTree),
    Brute,
}

/// An index over a subset of a dataset.
#[derive(Debug)]
pub struct BuiltIndex {
    pub method: Method,
    pub index: Index,
    pub members: Vec<PointId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Answer {
    pub neighbor: PointId,
    /// Triplets spent; absent for methods that read distances.
    pub triplets: Option<u64>,
    pub fallback: bool,
}

impl BuiltIndex {
    pub fn build(
        method: Method,
        dataset: &Dataset,
        members: &[PointId],
        n0: usize,
        seed: u64,
        oracle: &CountingOracle<'_>,
    ) -> Result<BuiltIndex, EvalError> {
        let mut members = members.to_vec();
        members.sort_unstable();
        let index = match method {
            Method::CompTree => Index::Comp(CompTree::build(&members, n0, seed, oracle)?),
            Method::Baseline(kind) => Index::Partition(PartitionTree::build(kind, dataset, &members, n0, seed)?),
            Method::Brute => Index::Brute,
        };
        Ok(BuiltIndex { method, index, members })
    }

    pub fn height(&self) -> Option<usize> {
        match &self.index {
            Index::Comp(t) => Some(t.height()),
            Index::Partition(t) => Some(t.height()),
            Index::Brute => None,
        }
    }

    pub fn build_triplets(&self) -> Option<u64> {
        match &self.index {
            Index::Comp(t) => Some(t.build_triplets()),
            _ => None,
        }
    }

    pub fn extra_triplets(&self) -> Option<u64> {
        match &self.index {
            Index::Comp(t) => Some(t.extra_triplets()),
            _ => None,
        }
    }

    pub fn answer(&self, dataset: &Dataset, query: &ResolvedQuery, oracle: &CountingOracle<'_>) -> Result<Answer, EvalError> {
        Ok(match &self.index {
            Index::Comp(t) => {
                let r = t.search(query, oracle)?;
                Answer { neighbor: r.neighbor, triplets: Some(r.triplets_used), fallback: r.fallback }
            }
            Index::Partition(t) => {
                let q = match &query.probe {
                    Probe::Point(p) => dataset.vector(*p).expect("baseline over vectors"),
                    Probe::Vector(v) => v.as_slice(),
                    Probe::Codes(_) => unreachable!("baselines reject categorical data"),
                };
                let hit = t.defeatist_query(dataset, q, query.exclude)?;
                Answer { neighbor: hit.neighbor, triplets: None, fallback: hit.fallback }
            }
            Index::Brute => {
                let nn = brute_force_nn(dataset, &self.members, query)?;
                Answer { neighbor: nn.id, triplets: None, fallback: false }
            }
        })
    }
}

/// Per-query outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRecord {
    pub query: PointId,
    pub neighbor: PointId,
    /// Distance from the query to the returned point.
    pub distance: f64,
    /// Distance from the query to its true nearest neighbor.
    pub nn_distance: f64,
    /// Returned point is one of the true minimizers.
    pub hit: bool,
    /// Returned point is the smallest-id minimizer.
    pub exact_id: bool,
    pub triplets: Option<u64>,
    pub fallback: bool,
}

/// Maps in order, in parallel when asked; the output order never changes.
pub(crate) fn map_ordered<T: Sync, R: Send>(items: &[T], parallel: bool, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

pub fn ground_truth(
    dataset: &Dataset,
    members: &[PointId],
    queries: &[ResolvedQuery],
    parallel: bool,
) -> Result<Vec<Nearest>, EvalError> {
    map_ordered(queries, parallel, |q| brute_force_nn(dataset, members, q)).into_iter().map(|r| r.map_err(Into::into)).collect()
}

/// Runs every query against `index` and judges it against `truth`.
pub fn evaluate(
    dataset: &Dataset,
    index: &BuiltIndex,
    queries: &[(PointId, ResolvedQuery)],
    truth: &[Nearest],
    oracle: &CountingOracle<'_>,
    parallel: bool,
) -> Result<Vec<QueryRecord>, EvalError> {
    let before = oracle.count();
    let jobs: Vec<(&(PointId, ResolvedQuery), &Nearest)> = queries.iter().zip(truth).collect();
    let records = map_ordered(&jobs, parallel, |((id, q), nn)| -> Result<QueryRecord, EvalError> {
        let a = index.answer(dataset, q, oracle)?;
        let distance = dataset.probe_distance(&q.probe, a.neighbor);
        Ok(QueryRecord {
            query: *id,
            neighbor: a.neighbor,
            distance,
            nn_distance: nn.distance,
            hit: distance == nn.distance,
            exact_id: a.neighbor == nn.id,
            triplets: a.triplets,
            fallback: a.fallback,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let reported: u64 = records.iter().filter_map(|r| r.triplets).sum();
    let counted = oracle.count() - before;
    if counted != reported {
        return Err(EvalError::Accounting { oracle: counted, reported });
    }
    Ok(records)
}

/// Fraction of queries whose answer is not a true nearest neighbor; any
/// point at the minimum distance counts as a hit.
pub fn miss_probability(records: &[QueryRecord]) -> f64 {
    records.iter().filter(|r| !r.hit).count() as f64 / records.len() as f64
}

/// Like [`miss_probability`], but only the smallest-id minimizer is a hit.
pub fn strict_miss_probability(records: &[QueryRecord]) -> f64 {
    records.iter().filter(|r| !r.exact_id).count() as f64 / records.len() as f64
}

/// Mean of `d_alg / d_nn - 1` over queries with `d_nn > 0`, and the number
/// of queries left out because `d_nn = 0`.
pub fn relative_distance_error(records: &[QueryRecord]) -> Result<(f64, usize), EvalError> {
    let kept: Vec<f64> = records.iter().filter(|r| r.nn_distance > 0.0).map(|r| r.distance / r.nn_distance - 1.0).collect();
    let excluded = records.len() - kept.len();
    if kept.is_empty() {
        return Err(EvalError::AllExcluded);
    }
    Ok((kept.iter().sum::<f64>() / kept.len() as f64, excluded))
}

#[derive(Debug)]
pub struct LeaveOneOut {
    pub miss_probability: f64,
    pub records: Vec<QueryRecord>,
    pub index: BuiltIndex,
    /// Triplets counted by the oracle while building.
    pub oracle_build_triplets: u64,
}

pub fn leave_one_out_queries(ids: &[PointId]) -> Vec<(PointId, ResolvedQuery)> {
    ids.iter().map(|&id| (id, ResolvedQuery { probe: Probe::Point(id), exclude: Some(id) })).collect()
}

/// Builds `method` over the whole dataset and queries every point with
/// itself excluded from the answer. The query still takes part in the
/// tree, possibly as a pivot.
pub fn leave_one_out_error(
    method: Method,
    dataset: &Dataset,
    n0: usize,
    seed: u64,
    parallel: bool,
) -> Result<LeaveOneOut, EvalError> {
    if dataset.len() < 2 {
        return Err(EvalError::TooSmall(dataset.len()));
    }
    let members: Vec<PointId> = dataset.ids().collect();
    let queries = leave_one_out_queries(&members);
    let truth = ground_truth(dataset, &members, &queries.iter().map(|q| q.1.clone()).collect::<Vec<_>>(), parallel)?;
    let oracle = CountingOracle::new(dataset);
    let index = BuiltIndex::build(method, dataset, &members, n0, seed, &oracle)?;
    let oracle_build_triplets = oracle.count();
    let records = evaluate(dataset, &index, &queries, &truth, &oracle, parallel)?;
    Ok(LeaveOneOut { miss_probability: miss_probability(&records), records, index, oracle_build_triplets })
}
