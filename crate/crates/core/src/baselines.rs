//! Euclidean partition trees: KD, random-projection and principal-axis trees.
//!
//! These see coordinates directly and serve as reference points for the
//! comparison tree. All three split at the median projection with "≤ goes
//! left"; they differ only in the direction they project onto.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comptree::TreeStats;
use crate::format::{self, FormatError, TreeFile};
use crate::metric::{euclidean, Dataset, PointId, Points};
use crate::rng;

/// Power iteration stops after this many steps.
pub const POWER_ITERATIONS: usize = 100;
/// ... or once the direction changes by less than this, relatively.
pub const POWER_TOLERANCE: f64 = 1e-9;
/// Random directions tried before falling back to the widest axis.
const DIRECTION_RETRIES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    KdTree,
    RpTree,
    PaTree,
}

impl BaselineKind {
    pub fn tag(self) -> &'static str {
        match self {
            BaselineKind::KdTree => "kdtree",
            BaselineKind::RpTree => "rptree",
            BaselineKind::PaTree => "patree",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kdtree" => Ok(BaselineKind::KdTree),
            "rptree" => Ok(BaselineKind::RpTree),
            "patree" => Ok(BaselineKind::PaTree),
            other => Err(format!("unknown baseline {other:?}")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("{0} trees need a dense-vector dataset")]
    NotVectors(BaselineKind),
    #[error("maximum leaf size must be at least 1")]
    ZeroLeafSize,
    #[error("cannot build a tree over an empty point set")]
    Empty,
    #[error("query has dimension {found}, tree expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("the only indexed point is the excluded query")]
    NothingToReturn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    Axis(usize),
    Direction(Vec<f64>),
}

impl SplitRule {
    pub fn project(&self, x: &[f64]) -> f64 {
        match self {
            SplitRule::Axis(k) => x[*k],
            SplitRule::Direction(v) => v.iter().zip(x).map(|(a, b)| a * b).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PartitionKind {
    Leaf {
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        frozen: bool,
    },
    Internal { rule: SplitRule, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionNode {
    pub start: usize,
    pub end: usize,
    pub depth: usize,
    #[serde(flatten)]
    pub kind: PartitionKind,
}

impl PartitionNode {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// A binary space partition over vector points; left child = members whose
/// projection is at most the node threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    kind: BaselineKind,
    n0: usize,
    seed: u64,
    dim: usize,
    height: usize,
    ids: Vec<PointId>,
    nodes: Vec<PartitionNode>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineHit {
    pub neighbor: PointId,
    pub distance: f64,
    pub leaf_depth: usize,
    pub fallback: bool,
}

/// Median split of `members` along `rule`, ties broken by id.
///
/// The left side takes every member projecting at or below the median
/// value; if that swallows the whole node, the threshold drops to the next
/// smaller value. `None` when all projections coincide.
fn median_split(
    coords: &[f64],
    dim: usize,
    members: &[PointId],
    rule: &SplitRule,
) -> Option<(f64, Vec<PointId>, Vec<PointId>)> {
    let point = |p: PointId| &coords[p.index() * dim..(p.index() + 1) * dim];
    let mut proj: Vec<(f64, PointId)> = members.iter().map(|&p| (rule.project(point(p)), p)).collect();
    proj.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut threshold = proj[(proj.len() - 1) / 2].0;
    if threshold >= proj[proj.len() - 1].0 {
        threshold = proj.iter().rev().map(|p| p.0).find(|&v| v < threshold)?;
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &p in members {
        if rule.project(point(p)) <= threshold {
            left.push(p);
        } else {
            right.push(p);
        }
    }
    Some((threshold, left, right))
}

fn widest_axis(coords: &[f64], dim: usize, members: &[PointId]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for k in 0..dim {
        let (lo, hi) = members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let v = coords[p.index() * dim + k];
            (lo.min(v), hi.max(v))
        });
        let spread = hi - lo;
        if spread > 0.0 && best.is_none_or(|b| spread > b.1) {
            best = Some((k, spread));
        }
    }
    best.map(|b| b.0)
}

/// Covariance matrix (row-major, `dim × dim`) of the members.
pub fn covariance(coords: &[f64], dim: usize, members: &[PointId]) -> (Vec<f64>, Vec<f64>) {
    let m = members.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in members {
        for (k, mk) in mean.iter_mut().enumerate() {
            *mk += coords[p.index() * dim + k];
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut cov = vec![0.0; dim * dim];
    for p in members {
        let x = &coords[p.index() * dim..(p.index() + 1) * dim];
        for i in 0..dim {
            let di = x[i] - mean[i];
            for j in i..dim {
                cov[i * dim + j] += di * (x[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i * dim + j] /= m;
            cov[j * dim + i] = cov[i * dim + j];
        }
    }
    (mean, cov)
}

fn mat_vec(mat: &[f64], v: &[f64]) -> Vec<f64> {
    let dim = v.len();
    (0..dim).map(|i| (0..dim).map(|j| mat[i * dim + j] * v[j]).sum()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Top principal direction of the members by power iteration, with its
/// eigenvalue. Starts from the member farthest from the mean.
pub fn principal_axis(coords: &[f64], dim: usize, members: &[PointId]) -> Option<(Vec<f64>, f64)> {
    let (mean, cov) = covariance(coords, dim, members);
    let start = members
        .iter()
        .map(|p| {
            let x = &coords[p.index() * dim..(p.index() + 1) * dim];
            x.iter().zip(&mean).map(|(a, b)| a - b).collect::<Vec<f64>>()
        })
        .max_by(|a, b| norm(a).total_cmp(&norm(b)))?;
    let len = norm(&start);
    if len == 0.0 {
        return None;
    }
    let mut v: Vec<f64> = start.iter().map(|x| x / len).collect();
    for _ in 0..POWER_ITERATIONS {
        let w = mat_vec(&cov, &v);
        let len = norm(&w);
        if len == 0.0 {
            return None;
        }
        let next: Vec<f64> = w.iter().map(|x| x / len).collect();
        let change = norm(&next.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        v = next;
        if change < POWER_TOLERANCE {
            break;
        }
    }
    let lambda = v.iter().zip(mat_vec(&cov, &v)).map(|(a, b)| a * b).sum();
    Some((v, lambda))
}

impl PartitionTree {
    pub fn build(
        kind: BaselineKind,
        dataset: &Dataset,
        members: &[PointId],
        n0: usize,
        seed: u64,
    ) -> Result<PartitionTree, BaselineError> {
        let Points::Vectors { dim, coords } = dataset.points() else {
            return Err(BaselineError::NotVectors(kind));
        };
        let dim = *dim;
        if n0 == 0 {
            return Err(BaselineError::ZeroLeafSize);
        }
        if members.is_empty() {
            return Err(BaselineError::Empty);
        }
        let mut ids = members.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mut nodes =
            vec![PartitionNode { start: 0, end: ids.len(), depth: 0, kind: PartitionKind::Leaf { frozen: false } }];
        let mut keys = vec![rng::ROOT_KEY];
        let mut pending = vec![0usize];
        while let Some(idx) = pending.pop() {
            let PartitionNode { start, end, depth, .. } = nodes[idx];
            if end - start <= n0 {
                continue;
            }
            let slice = &ids[start..end];
            let found = match kind {
                BaselineKind::KdTree => None,
                BaselineKind::RpTree => {
                    let mut stream = rng::stream(seed, keys[idx]);
                    (0..DIRECTION_RETRIES).find_map(|_| {
                        let mut v: Vec<f64> = (0..dim).map(|_| stream.sample(StandardNormal)).collect();
                        let len = norm(&v);
                        v.iter_mut().for_each(|x| *x /= len);
                        let rule = SplitRule::Direction(v);
                        median_split(coords, dim, slice, &rule).map(|s| (rule, s))
                    })
                }
                BaselineKind::PaTree => principal_axis(coords, dim, slice).and_then(|(v, _)| {
                    let rule = SplitRule::Direction(v);
                    median_split(coords, dim, slice, &rule).map(|s| (rule, s))
                }),
            };
            let found = found.or_else(|| {
                let rule = SplitRule::Axis(widest_axis(coords, dim, slice)?);
                median_split(coords, dim, slice, &rule).map(|s| (rule, s))
            });
            let Some((rule, (threshold, left_ids, right_ids))) = found else {
                nodes[idx].kind = PartitionKind::Leaf { frozen: true };
                continue;
            };
            let mid = start + left_ids.len();
            ids[start..mid].copy_from_slice(&left_ids);
            ids[mid..end].copy_from_slice(&right_ids);
            let (left, right) = (nodes.len(), nodes.len() + 1);
            nodes.push(PartitionNode { start, end: mid, depth: depth + 1, kind: PartitionKind::Leaf { frozen: false } });
            nodes.push(PartitionNode { start: mid, end, depth: depth + 1, kind: PartitionKind::Leaf { frozen: false } });
            keys.push(rng::child_key(keys[idx], false));
            keys.push(rng::child_key(keys[idx], true));
            nodes[idx].kind = PartitionKind::Internal { rule, threshold, left, right };
            pending.push(right);
            pending.push(left);
        }
        let height = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        Ok(PartitionTree { kind, n0, seed: if kind == BaselineKind::RpTree { seed } else { 0 }, dim, height, ids, nodes })
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn nodes(&self) -> &[PartitionNode] {
        &self.nodes
    }

    pub fn members(&self, node: &PartitionNode) -> &[PointId] {
        &self.ids[node.start..node.end]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &PartitionNode> {
        self.nodes.iter().filter(|n| matches!(n.kind, PartitionKind::Leaf { .. }))
    }

    fn descend(&self, mut idx: usize, q: &[f64]) -> (usize, Option<usize>) {
        let mut parent = None;
        while let PartitionKind::Internal { ref rule, threshold, left, right } = self.nodes[idx].kind {
            parent = Some(idx);
            idx = if rule.project(q) <= threshold { left } else { right };
        }
        (idx, parent)
    }

    fn scan(&self, dataset: &Dataset, leaf: usize, q: &[f64], exclude: Option<PointId>) -> Option<(PointId, f64)> {
        let mut best: Option<(PointId, f64)> = None;
        for &p in self.members(&self.nodes[leaf]) {
            if Some(p) == exclude {
                continue;
            }
            let d = euclidean(q, dataset.vector(p).expect("vector dataset"));
            if best.is_none_or(|b| d < b.1) {
                best = Some((p, d));
            }
        }
        best
    }

    /// Greedy descent and exhaustive Euclidean scan of one leaf. A
    /// leave-one-out query alone in its leaf is answered from the sibling
    /// subtree instead.
    pub fn defeatist_query(
        &self,
        dataset: &Dataset,
        q: &[f64],
        exclude: Option<PointId>,
    ) -> Result<BaselineHit, BaselineError> {
        if q.len() != self.dim {
            return Err(BaselineError::Dimension { expected: self.dim, found: q.len() });
        }
        let (leaf, parent) = self.descend(0, q);
        if let Some((neighbor, distance)) = self.scan(dataset, leaf, q, exclude) {
            return Ok(BaselineHit { neighbor, distance, leaf_depth: self.nodes[leaf].depth, fallback: false });
        }
        let parent = parent.ok_or(BaselineError::NothingToReturn)?;
        let PartitionKind::Internal { left, right, .. } = self.nodes[parent].kind else { unreachable!() };
        let (leaf, _) = self.descend(if leaf == left { right } else { left }, q);
        let (neighbor, distance) = self.scan(dataset, leaf, q, exclude).ok_or(BaselineError::NothingToReturn)?;
        Ok(BaselineHit { neighbor, distance, leaf_depth: self.nodes[leaf].depth, fallback: true })
    }

    pub fn stats(&self) -> TreeStats {
        let mut leaf_sizes = BTreeMap::new();
        let mut nodes_per_depth = vec![0; self.height + 1];
        let (mut leaves, mut frozen_leaves) = (0, 0);
        for node in &self.nodes {
            nodes_per_depth[node.depth] += 1;
            if let PartitionKind::Leaf { frozen } = node.kind {
                leaves += 1;
                frozen_leaves += usize::from(frozen);
                *leaf_sizes.entry(node.len()).or_insert(0) += 1;
            }
        }
        TreeStats {
            n: self.len(),
            n0: self.n0,
            height: self.height,
            leaves,
            frozen_leaves,
            leaf_sizes,
            nodes_per_depth,
            build_triplets: 0,
            extra_triplets: 0,
        }
    }

    /// Checks partition, threshold and leaf-size invariants against the data.
    pub fn validate(&self, dataset: &Dataset) -> Result<(), String> {
        let mut seen = self.ids.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err("ids repeat".into());
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            match &node.kind {
                PartitionKind::Leaf { frozen } => {
                    if node.is_empty() || (!frozen && node.len() > self.n0) {
                        return Err(format!("leaf {idx} has bad size {}", node.len()));
                    }
                }
                PartitionKind::Internal { rule, threshold, left, right } => {
                    let (l, r) = (&self.nodes[*left], &self.nodes[*right]);
                    if l.start != node.start || l.end != r.start || r.end != node.end || l.is_empty() || r.is_empty() {
                        return Err(format!("children of node {idx} do not split its range"));
                    }
                    let proj = |p: &PointId| rule.project(dataset.vector(*p).unwrap());
                    if self.members(l).iter().any(|p| proj(p) > *threshold)
                        || self.members(r).iter().any(|p| proj(p) <= *threshold)
                    {
                        return Err(format!("node {idx} violates its threshold"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        format::to_json(self.kind.tag(), self)
    }

    pub fn from_json(text: &str) -> Result<PartitionTree, FormatError> {
        let method = format::peek_method(text)?;
        let file: TreeFile<PartitionTree> = format::from_json(text, &method)?;
        if file.body.kind.tag() != method {
            return Err(FormatError::Invalid("method tag disagrees with tree kind".into()));
        }
        Ok(file.body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(ds: &Dataset) -> Vec<PointId> {
        ds.ids().collect()
    }

    fn row() -> Dataset {
        Dataset::from_vectors("row", 2, vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0])
    }

    #[test]
    fn kd_median_split() {
        let ds = row();
        let t = PartitionTree::build(BaselineKind::KdTree, &ds, &ids(&ds), 2, 0).unwrap();
        let leaves: Vec<_> = t.leaves().map(|l| t.members(l).to_vec()).collect();
        assert_eq!(leaves, vec![vec![PointId(0), PointId(1)], vec![PointId(2), PointId(3)]]);
        assert_eq!(t.defeatist_query(&ds, &[0.4, 0.0], None).unwrap().neighbor, PointId(0));
        // On the threshold itself the query goes left.
        assert_eq!(t.defeatist_query(&ds, &[1.0, 7.0], None).unwrap().neighbor, PointId(1));
        assert!(matches!(t.defeatist_query(&ds, &[1.0], None), Err(BaselineError::Dimension { .. })));
    }

    #[test]
    fn small_sets_and_identical_points() {
        let ds = row();
        for kind in [BaselineKind::KdTree, BaselineKind::RpTree, BaselineKind::PaTree] {
            let t = PartitionTree::build(kind, &ds, &ids(&ds), 4, 0).unwrap();
            assert_eq!(t.nodes().len(), 1);
            let same = Dataset::from_vectors("same", 2, vec![1.0; 12]);
            let t = PartitionTree::build(kind, &same, &ids(&same), 2, 0).unwrap();
            assert_eq!(t.nodes()[0].kind, PartitionKind::Leaf { frozen: true });
        }
    }

    #[test]
    fn rp_on_a_line_is_a_median_split() {
        let ds = Dataset::from_line("l", &[5.0, 1.0, 3.0, 2.0, 4.0]);
        let t = PartitionTree::build(BaselineKind::RpTree, &ds, &ids(&ds), 3, 9).unwrap();
        let mut sides: Vec<Vec<f64>> =
            t.leaves().map(|l| t.members(l).iter().map(|p| ds.vector(*p).unwrap()[0]).collect()).collect();
        sides.iter_mut().for_each(|s| s.sort_by(f64::total_cmp));
        sides.sort_by(|a, b| a[0].total_cmp(&b[0]));
        // Five points: the median goes left, whichever way the direction points.
        assert!(sides == vec![vec![1.0, 2.0], vec![3.0, 4.0, 5.0]] || sides == vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0]]);
        let again = PartitionTree::build(BaselineKind::RpTree, &ds, &ids(&ds), 3, 9).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn pa_follows_collinear_points() {
        let coords: Vec<f64> = (0..6).flat_map(|i| [i as f64, 2.0 * i as f64]).collect();
        let ds = Dataset::from_vectors("diag", 2, coords);
        let (v, _) = principal_axis(match ds.points() {
            Points::Vectors { coords, .. } => coords,
            _ => unreachable!(),
        }, 2, &ids(&ds))
        .unwrap();
        let expect = [1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
        let sign = v[0].signum();
        assert!((sign * v[0] - expect[0]).abs() < 1e-12 && (sign * v[1] - expect[1]).abs() < 1e-12);
        let t = PartitionTree::build(BaselineKind::PaTree, &ds, &ids(&ds), 3, 0).unwrap();
        assert!(t.leaves().all(|l| l.len() == 3));
    }

    #[test]
    fn json_roundtrip() {
        let ds = row();
        let t = PartitionTree::build(BaselineKind::PaTree, &ds, &ids(&ds), 1, 0).unwrap();
        assert_eq!(PartitionTree::from_json(&t.to_json()).unwrap(), t);
        assert!(crate::CompTree::from_json(&t.to_json()).is_err());
    }

    #[test]
    fn graph_data_is_rejected() {
        let g = crate::graph::Graph::from_edges(&[(0, 1, 1.0)]).unwrap();
        let ds = Dataset::from_graph("g", g);
        assert_eq!(
            PartitionTree::build(BaselineKind::KdTree, &ds, &ids(&ds), 1, 0),
            Err(BaselineError::NotVectors(BaselineKind::KdTree))
        );
    }
}
