//! Triplet comparisons: the only access to the metric that index
//! construction and search are allowed.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::metric::{Dataset, MetricError, PointId, Probe};

/// Answer to "is `anchor` at least as close to `y` as to `z`?".
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Closer {
    /// `d(anchor, y) <= d(anchor, z)`; ties land here.
    ToY,
    ToZ,
}

/// Source of triplet answers.
///
/// Implementations must be callable concurrently; every call is one triplet.
pub trait TripletOracle: Sync {
    fn compare(&self, anchor: &Probe, y: PointId, z: PointId) -> Closer;
}

impl<O: TripletOracle + ?Sized> TripletOracle for &O {
    fn compare(&self, anchor: &Probe, y: PointId, z: PointId) -> Closer {
        (**self).compare(anchor, y, z)
    }
}

/// A triplet oracle backed by a dataset's metric, counting every answer.
#[derive(Debug)]
pub struct CountingOracle<'a> {
    dataset: &'a Dataset,
    answered: AtomicU64,
}

impl<'a> CountingOracle<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        CountingOracle { dataset, answered: AtomicU64::new(0) }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    /// Number of triplets answered so far.
    pub fn count(&self) -> u64 {
        self.answered.load(Ordering::SeqCst)
    }

    /// Checked triplet query over three stored points.
    pub fn triplet_query(&self, x: PointId, y: PointId, z: PointId) -> Result<Closer, MetricError> {
        for id in [x, y, z] {
            self.dataset.check(id)?;
        }
        Ok(self.compare(&Probe::Point(x), y, z))
    }
}

impl TripletOracle for CountingOracle<'_> {
    fn compare(&self, anchor: &Probe, y: PointId, z: PointId) -> Closer {
        self.answered.fetch_add(1, Ordering::Relaxed);
        let dy = self.dataset.probe_distance(anchor, y);
        let dz = self.dataset.probe_distance(anchor, z);
        if dy <= dz {
            Closer::ToY
        } else {
            Closer::ToZ
        }
    }
}
