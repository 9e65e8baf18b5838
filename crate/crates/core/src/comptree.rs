//! The comparison tree.
//!
//! Every internal node holds two pivots drawn uniformly at random from its
//! members; each other member goes left iff it is at least as close to the
//! left pivot as to the right one. Search is defeatist: one triplet per level
//! to pick a side, then a linear scan of the leaf. Nothing here reads a
//! distance; all metric access goes through a [`TripletOracle`].

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{self, FormatError, TreeFile};
use crate::metric::{PointId, Probe, ResolvedQuery};
use crate::oracle::{Closer, TripletOracle};
use crate::rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("maximum leaf size must be at least 1")]
    ZeroLeafSize,
    #[error("cannot build a tree over an empty point set")]
    Empty,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SearchError {
    #[error("the only indexed point is the excluded query")]
    NothingToReturn,
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeKind {
    Leaf {
        /// All members are at distance 0 from each other, so no split exists.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        frozen: bool,
    },
    Internal { left_pivot: PointId, right_pivot: PointId, left: usize, right: usize },
}

/// A node covers `ids[start..end]` of its tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub start: usize,
    pub end: usize,
    pub depth: usize,
    #[serde(flatten)]
    pub kind: NodeKind,
}

impl Node {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompTree {
    n0: usize,
    seed: u64,
    height: usize,
    /// One assignment pass per internal node: the sum of `|members| - 2`.
    build_triplets: u64,
    /// Triplets spent on top of `build_triplets`: duplicate-pivot probes
    /// and discarded assignments.
    extra_triplets: u64,
    /// Member ids permuted so that every node owns a contiguous range,
    /// ascending within each leaf.
    ids: Vec<PointId>,
    nodes: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchReport {
    pub neighbor: PointId,
    pub triplets_used: u64,
    /// Depth of the leaf that was scanned.
    pub leaf_depth: usize,
    /// Member count of the scanned leaf.
    pub leaf_size: usize,
    /// The query was alone in its own leaf and the sibling subtree was
    /// searched instead.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedCandidates {
    /// Up to k leaf members, nearest first.
    pub ids: Vec<PointId>,
    pub triplets_used: u64,
    pub leaf_depth: usize,
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TreeStats {
    pub n: usize,
    pub n0: usize,
    pub height: usize,
    pub leaves: usize,
    pub frozen_leaves: usize,
    /// Leaf size → number of leaves.
    pub leaf_sizes: BTreeMap<usize, usize>,
    /// Node count per depth, root first.
    pub nodes_per_depth: Vec<usize>,
    pub build_triplets: u64,
    pub extra_triplets: u64,
}

/// One node split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Split {
    pub left_pivot: PointId,
    pub right_pivot: PointId,
    pub left: Vec<PointId>,
    pub right: Vec<PointId>,
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct SplitCost {
    pub assign: u64,
    pub extra: u64,
}

fn draw_pair<R: Rng>(rng: &mut R, m: usize) -> (usize, usize) {
    let i = rng.random_range(0..m);
    let mut j = rng.random_range(0..m - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// `d(a, b) == 0`, asked as "is b at least as close to a as to itself".
fn coincide<O: TripletOracle>(oracle: &O, a: PointId, b: PointId) -> bool {
    oracle.compare(&Probe::Point(b), a, b) == Closer::ToY
}

fn assign<O: TripletOracle>(members: &[PointId], i: usize, j: usize, oracle: &O) -> Split {
    let (x1, x2) = (members[i], members[j]);
    let mut left = Vec::with_capacity(members.len() / 2 + 1);
    let mut right = Vec::with_capacity(members.len() / 2 + 1);
    for (k, &x) in members.iter().enumerate() {
        if k == i {
            left.push(x);
        } else if k == j {
            right.push(x);
        } else if oracle.compare(&Probe::Point(x), x1, x2) == Closer::ToY {
            left.push(x);
        } else {
            right.push(x);
        }
    }
    Split { left_pivot: x1, right_pivot: x2, left, right }
}

/// Splits `members` (at least two) around a uniformly drawn pivot pair.
///
/// A right child holding only its pivot may mean the pivots coincide; that is
/// probed with one triplet, and coinciding pivots are redrawn up to
/// `members.len()` times. If that fails a scan decides whether any member
/// differs from the first one. Returns `None` when all members coincide.
pub(crate) fn split_members<O: TripletOracle, R: Rng>(
    members: &[PointId],
    rng: &mut R,
    oracle: &O,
    cost: &mut SplitCost,
) -> Option<Split> {
    let m = members.len();
    debug_assert!(m >= 2);
    let pass = (m - 2) as u64;
    let (i, j) = draw_pair(rng, m);
    let first = assign(members, i, j, oracle);
    if first.right.len() > 1 || m == 2 {
        cost.assign += pass;
        return Some(first);
    }
    cost.extra += 1;
    if !coincide(oracle, first.left_pivot, first.right_pivot) {
        cost.assign += pass;
        return Some(first);
    }
    cost.extra += pass;

    for _ in 0..m {
        let (i, j) = draw_pair(rng, m);
        cost.extra += 1;
        if !coincide(oracle, members[i], members[j]) {
            cost.assign += pass;
            return Some(assign(members, i, j, oracle));
        }
    }
    for k in 1..m {
        cost.extra += 1;
        if !coincide(oracle, members[0], members[k]) {
            let (i, j) = if rng.random::<bool>() { (0, k) } else { (k, 0) };
            cost.assign += pass;
            return Some(assign(members, i, j, oracle));
        }
    }
    None
}

impl CompTree {
    /// Builds a comparison tree over `members` with leaves of at most `n0`
    /// points. The same members, `n0` and `seed` always give the same tree.
    pub fn build<O: TripletOracle>(members: &[PointId], n0: usize, seed: u64, oracle: &O) -> Result<CompTree, BuildError> {
        if n0 == 0 {
            return Err(BuildError::ZeroLeafSize);
        }
        if members.is_empty() {
            return Err(BuildError::Empty);
        }
        let mut ids = members.to_vec();
        ids.sort_unstable();
        ids.dedup();

        let mut nodes = vec![Node { start: 0, end: ids.len(), depth: 0, kind: NodeKind::Leaf { frozen: false } }];
        let mut keys = vec![rng::ROOT_KEY];
        let mut cost = SplitCost::default();
        let mut pending = vec![0usize];
        while let Some(idx) = pending.pop() {
            let Node { start, end, depth, .. } = nodes[idx];
            if end - start <= n0 {
                continue;
            }
            let mut stream = rng::stream(seed, keys[idx]);
            let Some(split) = split_members(&ids[start..end], &mut stream, oracle, &mut cost) else {
                nodes[idx].kind = NodeKind::Leaf { frozen: true };
                continue;
            };
            let mid = start + split.left.len();
            ids[start..mid].copy_from_slice(&split.left);
            ids[mid..end].copy_from_slice(&split.right);
            let (left, right) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node { start, end: mid, depth: depth + 1, kind: NodeKind::Leaf { frozen: false } });
            nodes.push(Node { start: mid, end, depth: depth + 1, kind: NodeKind::Leaf { frozen: false } });
            keys.push(rng::child_key(keys[idx], false));
            keys.push(rng::child_key(keys[idx], true));
            nodes[idx].kind =
                NodeKind::Internal { left_pivot: split.left_pivot, right_pivot: split.right_pivot, left, right };
            pending.push(right);
            pending.push(left);
        }
        let height = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        Ok(CompTree {
            n0,
            seed,
            height,
            build_triplets: cost.assign,
            extra_triplets: cost.extra,
            ids,
            nodes,
        })
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of indexed points.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Maximum leaf depth; the root has depth 0.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn build_triplets(&self) -> u64 {
        self.build_triplets
    }

    pub fn extra_triplets(&self) -> u64 {
        self.extra_triplets
    }

    /// Every triplet the oracle answered during construction.
    pub fn total_build_triplets(&self) -> u64 {
        self.build_triplets + self.extra_triplets
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn members(&self, node: &Node) -> &[PointId] {
        &self.ids[node.start..node.end]
    }

    /// Leaf nodes in storage order.
    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    fn descend<O: TripletOracle>(&self, mut idx: usize, probe: &Probe, oracle: &O, used: &mut u64) -> (usize, Option<usize>) {
        let mut parent = None;
        while let NodeKind::Internal { left_pivot, right_pivot, left, right } = self.nodes[idx].kind {
            *used += 1;
            parent = Some(idx);
            idx = match oracle.compare(probe, left_pivot, right_pivot) {
                Closer::ToY => left,
                Closer::ToZ => right,
            };
        }
        (idx, parent)
    }

    fn candidates(&self, leaf: usize, exclude: Option<PointId>) -> impl Iterator<Item = PointId> + '_ {
        self.members(&self.nodes[leaf]).iter().copied().filter(move |&c| Some(c) != exclude)
    }

    /// Descends to a leaf with at least one candidate, falling back to the
    /// sibling subtree when the excluded query was alone in its leaf.
    fn locate<O: TripletOracle>(&self, query: &ResolvedQuery, oracle: &O, used: &mut u64) -> Result<(usize, bool), SearchError> {
        let (leaf, parent) = self.descend(0, &query.probe, oracle, used);
        if self.candidates(leaf, query.exclude).next().is_some() {
            return Ok((leaf, false));
        }
        let Some(parent) = parent else {
            return Err(SearchError::NothingToReturn);
        };
        let NodeKind::Internal { left, right, .. } = self.nodes[parent].kind else {
            unreachable!("parents are internal");
        };
        let sibling = if leaf == left { right } else { left };
        let (leaf, _) = self.descend(sibling, &query.probe, oracle, used);
        Ok((leaf, true))
    }

    /// Defeatist nearest-neighbor search.
    ///
    /// The leaf scan keeps the first-encountered minimizer in ascending id
    /// order and spends exactly one triplet per candidate after the first.
    pub fn search<O: TripletOracle>(&self, query: &ResolvedQuery, oracle: &O) -> Result<SearchReport, SearchError> {
        let mut used = 0;
        let (leaf, fallback) = self.locate(query, oracle, &mut used)?;
        let mut cands = self.candidates(leaf, query.exclude);
        let mut best = cands.next().expect("located leaf has a candidate");
        // Members of a frozen leaf coincide, so every one is equally close.
        let frozen = matches!(self.nodes[leaf].kind, NodeKind::Leaf { frozen: true });
        for c in cands.filter(|_| !frozen) {
            used += 1;
            if oracle.compare(&query.probe, best, c) == Closer::ToZ {
                best = c;
            }
        }
        let node = &self.nodes[leaf];
        Ok(SearchReport { neighbor: best, triplets_used: used, leaf_depth: node.depth, leaf_size: node.len(), fallback })
    }

    /// Ranks the members of the query's leaf by comparison sort and returns
    /// the first `k`. Sorting is a stable merge sort, so ties keep ascending
    /// id order and `k = 1` agrees with [`CompTree::search`].
    pub fn leaf_candidates<O: TripletOracle>(
        &self,
        query: &ResolvedQuery,
        k: usize,
        oracle: &O,
    ) -> Result<RankedCandidates, SearchError> {
        if k == 0 {
            return Err(SearchError::ZeroK);
        }
        let mut used = 0;
        let (leaf, fallback) = self.locate(query, oracle, &mut used)?;
        let mut ids: Vec<PointId> = self.candidates(leaf, query.exclude).collect();
        if matches!(self.nodes[leaf].kind, NodeKind::Leaf { frozen: true }) {
            ids.truncate(k);
            return Ok(RankedCandidates { ids, triplets_used: used, leaf_depth: self.nodes[leaf].depth, fallback });
        }
        merge_sort(&mut ids, &mut |a, b| {
            used += 1;
            oracle.compare(&query.probe, a, b) == Closer::ToY
        });
        ids.truncate(k);
        Ok(RankedCandidates { ids, triplets_used: used, leaf_depth: self.nodes[leaf].depth, fallback })
    }

    pub fn stats(&self) -> TreeStats {
        let mut leaf_sizes = BTreeMap::new();
        let mut nodes_per_depth = vec![0; self.height + 1];
        let (mut leaves, mut frozen_leaves) = (0, 0);
        for node in &self.nodes {
            nodes_per_depth[node.depth] += 1;
            if let NodeKind::Leaf { frozen } = node.kind {
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
            build_triplets: self.build_triplets,
            extra_triplets: self.extra_triplets,
        }
    }

    /// Checks the structural invariants that do not need the metric.
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes.is_empty() || self.ids.is_empty() {
            return Err("tree has no nodes".into());
        }
        let root = &self.nodes[0];
        if root.start != 0 || root.end != self.ids.len() || root.depth != 0 {
            return Err("root must cover every id at depth 0".into());
        }
        let mut sorted = self.ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err("ids repeat".into());
        }
        let mut reached = vec![false; self.nodes.len()];
        reached[0] = true;
        let mut height = 0;
        let mut assigned = 0u64;
        for (idx, node) in self.nodes.iter().enumerate() {
            if !reached[idx] {
                return Err(format!("node {idx} is unreachable or listed before its parent"));
            }
            match node.kind {
                NodeKind::Leaf { frozen } => {
                    height = height.max(node.depth);
                    if node.is_empty() {
                        return Err(format!("leaf {idx} is empty"));
                    }
                    if !frozen && node.len() > self.n0 {
                        return Err(format!("leaf {idx} holds {} > n0 = {}", node.len(), self.n0));
                    }
                }
                NodeKind::Internal { left_pivot, right_pivot, left, right } => {
                    if node.len() <= self.n0 {
                        return Err(format!("internal node {idx} holds only {}", node.len()));
                    }
                    let (l, r) = match (self.nodes.get(left), self.nodes.get(right)) {
                        (Some(l), Some(r)) if left > idx && right > idx => (l, r),
                        _ => return Err(format!("node {idx} has bad child links")),
                    };
                    if l.start != node.start || l.end != r.start || r.end != node.end || l.is_empty() || r.is_empty() {
                        return Err(format!("children of node {idx} do not split its range"));
                    }
                    if l.depth != node.depth + 1 || r.depth != node.depth + 1 {
                        return Err(format!("children of node {idx} have wrong depth"));
                    }
                    if !self.members(l).contains(&left_pivot) || !self.members(r).contains(&right_pivot) {
                        return Err(format!("pivots of node {idx} are not in their children"));
                    }
                    reached[left] = true;
                    reached[right] = true;
                    assigned += node.len() as u64 - 2;
                }
            }
        }
        if height != self.height {
            return Err(format!("stored height {} but leaves reach {height}", self.height));
        }
        if assigned != self.build_triplets {
            return Err("build triplet count does not reconcile".into());
        }
        for leaf in self.leaves() {
            if self.members(leaf).windows(2).any(|w| w[0] >= w[1]) {
                return Err("leaf members must be ascending".into());
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        format::to_json(format::METHOD_COMPTREE, self)
    }

    pub fn from_json(text: &str) -> Result<CompTree, FormatError> {
        let file: TreeFile<CompTree> = format::from_json(text, format::METHOD_COMPTREE)?;
        file.body.validate().map_err(FormatError::Invalid)?;
        Ok(file.body)
    }
}

/// Stable top-down merge sort; `le(a, b)` answers "a may precede b".
/// Uses at most `n * ceil(log2 n)` comparisons.
fn merge_sort<F: FnMut(PointId, PointId) -> bool>(v: &mut [PointId], le: &mut F) {
    if v.len() < 2 {
        return;
    }
    let mid = v.len() / 2;
    merge_sort(&mut v[..mid], le);
    merge_sort(&mut v[mid..], le);
    let mut merged = Vec::with_capacity(v.len());
    let (mut i, mut j) = (0, mid);
    while i < mid && j < v.len() {
        if le(v[i], v[j]) {
            merged.push(v[i]);
            i += 1;
        } else {
            merged.push(v[j]);
            j += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..]);
    v.copy_from_slice(&merged);
}
