//! Weighted undirected graphs with on-demand shortest-path distances.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::OnceLock;

use thiserror::Error;

/// Graphs up to this many nodes keep every computed Dijkstra row.
pub const DEFAULT_CACHE_LIMIT: usize = 20_000;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph has no edges")]
    Empty,
    #[error("edge {u}-{v} has weight {w}; weights must be non-zero and finite")]
    BadWeight { u: u64, v: u64, w: f64 },
}

/// A connected graph in compressed adjacency form.
///
/// Node indices are dense; `labels[i]` is the id node `i` had in the input.
#[derive(Debug)]
pub struct Graph {
    labels: Vec<u64>,
    index: HashMap<u64, usize>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    rows: Vec<OnceLock<Box<[f64]>>>,
}

#[derive(PartialEq)]
struct Frontier(f64, u32);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Graph {
    /// Builds the graph from `(u, v, w)` edges and keeps only its largest
    /// connected component. Negative weights are replaced by their absolute
    /// value; self-loops are dropped.
    pub fn from_edges(edges: &[(u64, u64, f64)]) -> Result<Graph, GraphError> {
        Self::with_cache_limit(edges, DEFAULT_CACHE_LIMIT)
    }

    pub fn with_cache_limit(edges: &[(u64, u64, f64)], cache_limit: usize) -> Result<Graph, GraphError> {
        let mut labels: Vec<u64> = edges.iter().flat_map(|&(u, v, _)| [u, v]).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.is_empty() {
            return Err(GraphError::Empty);
        }
        let pos: HashMap<u64, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();

        let mut parent: Vec<usize> = (0..labels.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut clean = Vec::with_capacity(edges.len());
        for &(u, v, w) in edges {
            let w = w.abs();
            if w == 0.0 || !w.is_finite() {
                return Err(GraphError::BadWeight { u, v, w });
            }
            if u == v {
                continue;
            }
            let (a, b) = (pos[&u], pos[&v]);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
            clean.push((a, b, w));
        }

        // Largest component; ties go to the one holding the smallest label.
        let mut sizes: HashMap<usize, usize> = HashMap::new();
        let roots: Vec<usize> = (0..labels.len()).map(|i| find(&mut parent, i)).collect();
        for &r in &roots {
            *sizes.entry(r).or_default() += 1;
        }
        let keep = *sizes.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).unwrap().0;

        let mut remap = vec![u32::MAX; labels.len()];
        let mut kept = Vec::new();
        for (i, &r) in roots.iter().enumerate() {
            if r == keep {
                remap[i] = kept.len() as u32;
                kept.push(labels[i]);
            }
        }
        let n = kept.len();
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for (a, b, w) in clean {
            if remap[a] != u32::MAX {
                adj[remap[a] as usize].push((remap[b], w));
                adj[remap[b] as usize].push((remap[a], w));
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for list in adj {
            for (t, w) in list {
                targets.push(t);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        let rows = if n <= cache_limit { (0..n).map(|_| OnceLock::new()).collect() } else { Vec::new() };
        let index = kept.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        Ok(Graph { labels: kept, index, offsets, targets, weights, rows })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, node: usize) -> u64 {
        self.labels[node]
    }

    pub fn node_of(&self, label: u64) -> Option<usize> {
        self.index.get(&label).copied()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[node]..self.offsets[node + 1];
        self.targets[span.clone()].iter().map(|&t| t as usize).zip(self.weights[span].iter().copied())
    }

    /// Single-source shortest-path lengths from `source`.
    pub fn dijkstra(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Frontier(0.0, source as u32));
        while let Some(Frontier(d, u)) = heap.pop() {
            if d > dist[u as usize] {
                continue;
            }
            for (v, w) in self.neighbors(u as usize) {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Frontier(nd, v as u32));
                }
            }
        }
        dist
    }

    /// Shortest-path distance. The row of the smaller index is used for both
    /// argument orders, so the result is exactly symmetric.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let (s, t) = if a < b { (a, b) } else { (b, a) };
        match self.rows.get(s) {
            Some(cell) => cell.get_or_init(|| self.dijkstra(s).into_boxed_slice())[t],
            None => self.dijkstra(s)[t],
        }
    }
}
