//! Datasets, their distance rules, and the exact nearest-neighbor reference.
//!
//! Three flavors of point sets are supported, each with a fixed metric:
//!
//! - dense vectors under the Euclidean distance,
//! - categorical tuples under the mismatch (Hamming) distance,
//! - nodes of a weighted graph under the shortest-path distance.
//!
//! Index structures never read distances directly. They go through a
//! [`TripletOracle`](crate::oracle::TripletOracle); only the evaluation layer
//! and the Euclidean baselines touch [`Dataset::distance`].

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;

/// Dense 0-based index of a point inside a [`Dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub u32);

impl PointId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for PointId {
    fn from(i: usize) -> Self {
        PointId(u32::try_from(i).expect("point index exceeds u32"))
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// Euclidean distance over dense vectors.
    DenseVector,
    /// Number of differing coordinates between categorical tuples.
    CategoricalTuple,
    /// Shortest-path length between graph nodes.
    GraphNode,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::DenseVector => "dense-vector",
            MetricKind::CategoricalTuple => "categorical-tuple",
            MetricKind::GraphNode => "graph-node",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("arity mismatch: dataset has arity {expected}, payload has {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("unknown graph node {0}")]
    UnknownNode(u64),
    #[error("point {id} out of range for dataset of size {n}")]
    OutOfRange { id: u32, n: usize },
    #[error("payload of kind {found} cannot be compared against a {expected} dataset")]
    KindMismatch { expected: MetricKind, found: MetricKind },
    #[error("no candidate points to search")]
    EmptyCandidates,
}

/// The raw payloads of a dataset. Each variant fixes the metric.
#[derive(Debug)]
pub enum Points {
    Vectors { dim: usize, coords: Vec<f64> },
    Categorical { arity: usize, codes: Vec<u32>, vocab: HashMap<String, u32> },
    Graph(Graph),
}

/// An indexed finite point set with its metric.
#[derive(Debug)]
pub struct Dataset {
    name: String,
    points: Points,
}

/// An out-of-sample point given in the dataset's own payload format.
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Vector(Vec<f64>),
    Tuple(Vec<String>),
    /// A node label as it appears in the original edge list.
    Node(u64),
}

/// A query against a dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum Query {
    /// A stored point, searched as-is (holdout test points live here).
    Point(PointId),
    /// A stored point that must not be returned as its own neighbor.
    LeaveOneOut(PointId),
    /// A payload that is not part of the dataset.
    External(Payload),
}

/// The anchor of a triplet comparison: either a stored point or a resolved
/// out-of-sample payload.
#[derive(Clone, Debug, PartialEq)]
pub enum Probe {
    Point(PointId),
    Vector(Vec<f64>),
    Codes(Vec<u32>),
}

/// A query resolved against a dataset, ready for searching.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedQuery {
    pub probe: Probe,
    pub exclude: Option<PointId>,
}

/// Result of an exhaustive nearest-neighbor scan.
#[derive(Clone, Debug, PartialEq)]
pub struct Nearest {
    /// Smallest id among the minimizers.
    pub id: PointId,
    pub distance: f64,
    /// Every candidate at the minimum distance, ascending.
    pub minimizers: Vec<PointId>,
}

impl Nearest {
    pub fn is_minimizer(&self, id: PointId) -> bool {
        self.minimizers.binary_search(&id).is_ok()
    }
}

/// Token code that never equals an interned token.
const UNKNOWN_TOKEN: u32 = u32::MAX;

impl Dataset {
    pub fn from_vectors(name: impl Into<String>, dim: usize, coords: Vec<f64>) -> Self {
        assert!(dim >= 1, "vector dimension must be positive");
        assert!(!coords.is_empty() && coords.len().is_multiple_of(dim), "coordinate buffer must hold whole points");
        Dataset { name: name.into(), points: Points::Vectors { dim, coords } }
    }

    /// Builds a dataset of 1-d points.
    pub fn from_line(name: impl Into<String>, values: &[f64]) -> Self {
        Self::from_vectors(name, 1, values.to_vec())
    }

    /// Interns string tokens; equality of codes is string equality.
    pub fn from_tuples<S: AsRef<str>>(name: impl Into<String>, rows: &[Vec<S>]) -> Self {
        assert!(!rows.is_empty(), "categorical dataset must be non-empty");
        let arity = rows[0].len();
        let mut vocab = HashMap::new();
        let mut codes = Vec::with_capacity(rows.len() * arity);
        for row in rows {
            assert_eq!(row.len(), arity, "all tuples must share one arity");
            for tok in row {
                let next = vocab.len() as u32;
                codes.push(*vocab.entry(tok.as_ref().to_owned()).or_insert(next));
            }
        }
        Dataset { name: name.into(), points: Points::Categorical { arity, codes, vocab } }
    }

    pub fn from_graph(name: impl Into<String>, graph: Graph) -> Self {
        Dataset { name: name.into(), points: Points::Graph(graph) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> MetricKind {
        match self.points {
            Points::Vectors { .. } => MetricKind::DenseVector,
            Points::Categorical { .. } => MetricKind::CategoricalTuple,
            Points::Graph(_) => MetricKind::GraphNode,
        }
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn len(&self) -> usize {
        match &self.points {
            Points::Vectors { dim, coords } => coords.len() / dim,
            Points::Categorical { arity, codes, .. } => codes.len() / arity.max(&1),
            Points::Graph(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Payload arity: vector dimension, tuple length, or 1 for graph nodes.
    pub fn arity(&self) -> usize {
        match &self.points {
            Points::Vectors { dim, .. } => *dim,
            Points::Categorical { arity, .. } => *arity,
            Points::Graph(_) => 1,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = PointId> + '_ {
        (0..self.len()).map(PointId::from)
    }

    /// Coordinates of a vector point.
    pub fn vector(&self, id: PointId) -> Option<&[f64]> {
        match &self.points {
            Points::Vectors { dim, coords } => Some(&coords[id.index() * dim..(id.index() + 1) * dim]),
            _ => None,
        }
    }

    fn codes(&self, id: PointId) -> &[u32] {
        match &self.points {
            Points::Categorical { arity, codes, .. } => &codes[id.index() * arity..(id.index() + 1) * arity],
            _ => unreachable!("codes() on non-categorical dataset"),
        }
    }

    pub fn check(&self, id: PointId) -> Result<PointId, MetricError> {
        if id.index() < self.len() {
            Ok(id)
        } else {
            Err(MetricError::OutOfRange { id: id.0, n: self.len() })
        }
    }

    /// Distance between two stored points.
    pub fn distance(&self, a: PointId, b: PointId) -> f64 {
        match &self.points {
            Points::Vectors { .. } => euclidean(self.vector(a).unwrap(), self.vector(b).unwrap()),
            Points::Categorical { .. } => mismatch(self.codes(a), self.codes(b)),
            Points::Graph(g) => g.distance(a.index(), b.index()),
        }
    }

    /// Distance from a probe to a stored point.
    pub fn probe_distance(&self, probe: &Probe, b: PointId) -> f64 {
        match probe {
            Probe::Point(a) => self.distance(*a, b),
            Probe::Vector(v) => euclidean(v, self.vector(b).expect("vector probe on non-vector dataset")),
            Probe::Codes(c) => mismatch(c, self.codes(b)),
        }
    }

    /// Checked distance between two payloads of this dataset's kind.
    pub fn payload_distance(&self, x: &Payload, y: &Payload) -> Result<f64, MetricError> {
        let px = self.resolve_payload(x)?;
        match (self.resolve_payload(y)?, &px) {
            (Probe::Point(b), _) => Ok(self.probe_distance(&px, b)),
            (Probe::Vector(v), Probe::Vector(u)) => Ok(euclidean(u, &v)),
            (Probe::Codes(v), Probe::Codes(u)) => Ok(mismatch(u, &v)),
            _ => unreachable!("payloads resolved against one dataset share a kind"),
        }
    }

    fn resolve_payload(&self, payload: &Payload) -> Result<Probe, MetricError> {
        let found = match payload {
            Payload::Vector(_) => MetricKind::DenseVector,
            Payload::Tuple(_) => MetricKind::CategoricalTuple,
            Payload::Node(_) => MetricKind::GraphNode,
        };
        match (&self.points, payload) {
            (Points::Vectors { dim, .. }, Payload::Vector(v)) => {
                if v.len() != *dim {
                    return Err(MetricError::ArityMismatch { expected: *dim, found: v.len() });
                }
                Ok(Probe::Vector(v.clone()))
            }
            (Points::Categorical { arity, vocab, .. }, Payload::Tuple(t)) => {
                if t.len() != *arity {
                    return Err(MetricError::ArityMismatch { expected: *arity, found: t.len() });
                }
                Ok(Probe::Codes(t.iter().map(|s| vocab.get(s).copied().unwrap_or(UNKNOWN_TOKEN)).collect()))
            }
            (Points::Graph(g), Payload::Node(label)) => {
                g.node_of(*label).map(|i| Probe::Point(PointId::from(i))).ok_or(MetricError::UnknownNode(*label))
            }
            _ => Err(MetricError::KindMismatch { expected: self.kind(), found }),
        }
    }

    pub fn resolve(&self, query: &Query) -> Result<ResolvedQuery, MetricError> {
        Ok(match query {
            Query::Point(id) => ResolvedQuery { probe: Probe::Point(self.check(*id)?), exclude: None },
            Query::LeaveOneOut(id) => ResolvedQuery { probe: Probe::Point(self.check(*id)?), exclude: Some(*id) },
            Query::External(p) => ResolvedQuery { probe: self.resolve_payload(p)?, exclude: None },
        })
    }
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[inline]
fn mismatch(a: &[u32], b: &[u32]) -> f64 {
    // Unknown tokens must never match, not even each other.
    a.iter().zip(b).filter(|(x, y)| x != y || **x == UNKNOWN_TOKEN).count() as f64
}

/// Exhaustive nearest-neighbor scan of `candidates`.
///
/// A leave-one-out query skips its own id. Ties resolve to the smallest id;
/// the full minimizer set is returned alongside.
pub fn brute_force_nn(dataset: &Dataset, candidates: &[PointId], query: &ResolvedQuery) -> Result<Nearest, MetricError> {
    let mut best = f64::INFINITY;
    let mut minimizers: Vec<PointId> = Vec::new();
    for &c in candidates {
        if Some(c) == query.exclude {
            continue;
        }
        let d = dataset.probe_distance(&query.probe, c);
        if d < best {
            best = d;
            minimizers.clear();
            minimizers.push(c);
        } else if d == best {
            minimizers.push(c);
        }
    }
    minimizers.sort_unstable();
    let id = *minimizers.first().ok_or(MetricError::EmptyCandidates)?;
    Ok(Nearest { id, distance: best, minimizers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn ids(v: &[u32]) -> Vec<PointId> {
        v.iter().copied().map(PointId).collect()
    }

    fn triangle() -> Dataset {
        Dataset::from_graph("tri", Graph::from_edges(&[(0, 1, 2.0), (1, 2, 3.0), (0, 2, 10.0)]).unwrap())
    }

    #[test]
    fn euclidean_pythagoras() {
        let ds = Dataset::from_vectors("v", 2, vec![0.0, 0.0, 3.0, 4.0]);
        assert_eq!(ds.distance(PointId(0), PointId(1)), 5.0);
    }

    #[test]
    fn mismatch_counts_differing_coordinates() {
        let ds = Dataset::from_tuples("c", &[vec!["1", "2", "3"], vec!["1", "5", "3"]]);
        assert_eq!(ds.distance(PointId(0), PointId(1)), 1.0);
    }

    #[test]
    fn shortest_path_takes_two_hops() {
        assert_eq!(triangle().distance(PointId(0), PointId(2)), 5.0);
    }

    #[test]
    fn payload_errors() {
        let ds = Dataset::from_vectors("v", 2, vec![0.0, 0.0]);
        let err = ds.payload_distance(&Payload::Vector(vec![1.0]), &Payload::Vector(vec![0.0, 0.0]));
        assert_eq!(err, Err(MetricError::ArityMismatch { expected: 2, found: 1 }));
        assert_eq!(triangle().resolve(&Query::External(Payload::Node(9))), Err(MetricError::UnknownNode(9)));
        assert!(matches!(ds.resolve(&Query::Point(PointId(3))), Err(MetricError::OutOfRange { .. })));
        assert!(matches!(
            ds.resolve(&Query::External(Payload::Node(0))),
            Err(MetricError::KindMismatch { .. })
        ));
    }

    #[test]
    fn unknown_tokens_never_match() {
        let ds = Dataset::from_tuples("c", &[vec!["a", "b"]]);
        let q = ds.resolve(&Query::External(Payload::Tuple(vec!["a".into(), "zz".into()]))).unwrap();
        assert_eq!(ds.probe_distance(&q.probe, PointId(0)), 1.0);
    }

    #[test]
    fn brute_force_on_a_line() {
        let ds = Dataset::from_line("l", &[3.0, 7.0, 20.0]);
        let q = ds.resolve(&Query::External(Payload::Vector(vec![8.0]))).unwrap();
        let nn = brute_force_nn(&ds, &ids(&[0, 1, 2]), &q).unwrap();
        assert_eq!((nn.id, nn.distance), (PointId(1), 1.0));
    }

    #[test]
    fn brute_force_reports_all_minimizers() {
        let ds = Dataset::from_line("l", &[0.0, 4.0, 4.0]);
        let q = ds.resolve(&Query::External(Payload::Vector(vec![5.0]))).unwrap();
        let nn = brute_force_nn(&ds, &ids(&[0, 1, 2]), &q).unwrap();
        assert_eq!(nn.minimizers, ids(&[1, 2]));
        assert_eq!(nn.id, PointId(1));
    }

    #[test]
    fn brute_force_on_graph() {
        let ds = triangle();
        let q = ds.resolve(&Query::Point(PointId(0))).unwrap();
        let nn = brute_force_nn(&ds, &ids(&[1, 2]), &q).unwrap();
        assert_eq!((nn.id, nn.distance), (PointId(1), 2.0));
    }

    #[test]
    fn leave_one_out_skips_self_and_empty_fails() {
        let ds = Dataset::from_line("l", &[1.0, 2.0]);
        let q = ds.resolve(&Query::LeaveOneOut(PointId(0))).unwrap();
        assert_eq!(brute_force_nn(&ds, &ids(&[0, 1]), &q).unwrap().id, PointId(1));
        assert_eq!(brute_force_nn(&ds, &ids(&[0]), &q), Err(MetricError::EmptyCandidates));
    }
}
