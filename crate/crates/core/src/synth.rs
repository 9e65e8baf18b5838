//! Reproducible synthetic vector datasets.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::metric::{Dataset, Points};
use crate::rng;

/// Number of components in the Gaussian mixture.
pub const MIXTURE_COMPONENTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Uniform on `[0, 1)^dim`.
    UniformCube,
    /// Equal-weight mixture of unit-variance spherical Gaussians whose means
    /// sit at `0, 1, …, 4` along the first axis.
    GaussianMixture,
    /// The integers `0..n` on a line.
    LineGrid,
    /// Row-major integer grid `ceil(sqrt(n))` points wide, first `n` cells.
    Grid2d,
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::UniformCube => "uniform-cube",
            SyntheticKind::GaussianMixture => "gaussian-mixture",
            SyntheticKind::LineGrid => "line-grid",
            SyntheticKind::Grid2d => "grid-2d",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "uniform-cube" => SyntheticKind::UniformCube,
            "gaussian-mixture" => SyntheticKind::GaussianMixture,
            "line-grid" => SyntheticKind::LineGrid,
            "grid-2d" => SyntheticKind::Grid2d,
            other => return Err(SynthError::UnknownKind(other.into())),
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("unknown synthetic kind {0:?}")]
    UnknownKind(String),
    #[error("n and dim must be at least 1")]
    Empty,
    #[error("{kind} data has dimension {expected}, not {found}")]
    Dimension { kind: SyntheticKind, expected: usize, found: usize },
}

pub fn generate_synthetic(kind: SyntheticKind, n: usize, dim: usize, seed: u64) -> Result<Dataset, SynthError> {
    if n == 0 || dim == 0 {
        return Err(SynthError::Empty);
    }
    let fixed = match kind {
        SyntheticKind::LineGrid => Some(1),
        SyntheticKind::Grid2d => Some(2),
        _ => None,
    };
    if let Some(expected) = fixed.filter(|&e| e != dim) {
        return Err(SynthError::Dimension { kind, expected, found: dim });
    }
    let mut rng = rng::stream(seed, rng::ROOT_KEY);
    let coords: Vec<f64> = match kind {
        SyntheticKind::UniformCube => (0..n * dim).map(|_| rng.random::<f64>()).collect(),
        SyntheticKind::GaussianMixture => {
            let mut out = Vec::with_capacity(n * dim);
            for _ in 0..n {
                let component = rng.random_range(0..MIXTURE_COMPONENTS) as f64;
                for k in 0..dim {
                    let z: f64 = rng.sample(StandardNormal);
                    out.push(if k == 0 { component + z } else { z });
                }
            }
            out
        }
        SyntheticKind::LineGrid => (0..n).map(|i| i as f64).collect(),
        SyntheticKind::Grid2d => {
            let side = (n as f64).sqrt().ceil() as usize;
            (0..n).flat_map(|i| [(i % side) as f64, (i / side) as f64]).collect()
        }
    };
    Ok(Dataset::from_vectors(format!("{kind}-n{n}-d{dim}-s{seed}"), dim, coords))
}

/// Headerless CSV, one point per row, shortest round-trip float formatting.
pub fn vectors_to_csv(dataset: &Dataset) -> Option<String> {
    let Points::Vectors { dim, coords } = dataset.points() else {
        return None;
    };
    let mut out = String::with_capacity(coords.len() * 8);
    for row in coords.chunks(*dim) {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_grid_is_the_integers() {
        let ds = generate_synthetic(SyntheticKind::LineGrid, 8, 1, 3).unwrap();
        assert_eq!(vectors_to_csv(&ds).unwrap(), "0\n1\n2\n3\n4\n5\n6\n7\n");
    }

    #[test]
    fn same_seed_same_bytes() {
        for kind in [SyntheticKind::UniformCube, SyntheticKind::GaussianMixture] {
            let a = vectors_to_csv(&generate_synthetic(kind, 50, 3, 42).unwrap()).unwrap();
            let b = vectors_to_csv(&generate_synthetic(kind, 50, 3, 42).unwrap()).unwrap();
            let c = vectors_to_csv(&generate_synthetic(kind, 50, 3, 43).unwrap()).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn cube_values_in_unit_interval() {
        let ds = generate_synthetic(SyntheticKind::UniformCube, 500, 4, 1).unwrap();
        let Points::Vectors { coords, .. } = ds.points() else { unreachable!() };
        assert!(coords.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn grid_and_errors() {
        let ds = generate_synthetic(SyntheticKind::Grid2d, 6, 2, 0).unwrap();
        assert_eq!(ds.vector(crate::PointId(5)).unwrap(), &[2.0, 1.0]);
        assert_eq!(generate_synthetic(SyntheticKind::LineGrid, 0, 1, 0).unwrap_err(), SynthError::Empty);
        assert!(matches!(generate_synthetic(SyntheticKind::Grid2d, 4, 3, 0), Err(SynthError::Dimension { .. })));
        assert!("cube".parse::<SyntheticKind>().is_err());
    }
}
