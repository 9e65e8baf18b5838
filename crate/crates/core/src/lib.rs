//! Nearest-neighbor search from triplet comparisons.
//!
//! The central structure is the [`CompTree`]: a random binary partition tree
//! whose every split is decided by asking "is x closer to y than to z?".
//! Around it sit the metric layer, Euclidean baseline trees, evaluators for
//! the tree's height and error bounds, and a benchmark harness.

pub mod baselines;
pub mod bench;
pub mod comptree;
pub mod eval;
pub mod format;
pub mod graph;
pub mod io;
pub mod metric;
pub mod oracle;
mod rng;
pub mod synth;
pub mod theory;

pub use baselines::{BaselineKind, PartitionTree};
pub use bench::{BenchConfig, BenchRow, Mode};
pub use comptree::{CompTree, SearchReport, TreeStats};
pub use eval::Method;
pub use io::DataFormat;
pub use metric::{brute_force_nn, Dataset, MetricKind, Nearest, Payload, PointId, Probe, Query, ResolvedQuery};
pub use oracle::{Closer, CountingOracle, TripletOracle};
pub use synth::{generate_synthetic, SyntheticKind};
pub use theory::{BoundReport, ExpansionProfile};
