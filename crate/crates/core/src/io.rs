//! Dataset loaders: numeric CSV, categorical CSV and weighted edge lists.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError};
use crate::metric::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// Numeric CSV, Euclidean metric.
    Vector,
    /// CSV of tokens, mismatch metric.
    Categorical,
    /// Whitespace edge list `u v [w]`, shortest-path metric.
    Graph,
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::Vector => "vector",
            DataFormat::Categorical => "categorical",
            DataFormat::Graph => "graph",
        })
    }
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vector" => Ok(DataFormat::Vector),
            "categorical" => Ok(DataFormat::Categorical),
            "graph" => Ok(DataFormat::Graph),
            other => Err(format!("unknown data format {other:?} (expected vector, categorical or graph)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: row {row}: {message}")]
    Row { path: PathBuf, row: u64, message: String },
    #[error("{0}: no data rows")]
    Empty(PathBuf),
    #[error("{path}: {source}")]
    Graph { path: PathBuf, source: GraphError },
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

pub fn load_dataset(path: &Path, format: DataFormat, header: bool) -> Result<Dataset, DataError> {
    match format {
        DataFormat::Vector => load_vectors(path, header),
        DataFormat::Categorical => load_categorical(path, header),
        DataFormat::Graph => load_edge_list(path),
    }
}

fn csv_rows(path: &Path, header: bool) -> Result<Vec<(u64, Vec<String>)>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io { path: path.into(), source },
            other => DataError::Row { path: path.into(), row: 0, message: format!("{other:?}") },
        })?;
    let mut rows = Vec::new();
    let mut arity = None;
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Row {
            path: path.into(),
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let fields: Vec<String> = record.iter().map(str::to_owned).collect();
        match arity {
            None => arity = Some(fields.len()),
            Some(a) if a != fields.len() => {
                return Err(DataError::Row {
                    path: path.into(),
                    row,
                    message: format!("expected {a} fields, found {}", fields.len()),
                })
            }
            _ => {}
        }
        rows.push((row, fields));
    }
    if rows.is_empty() {
        return Err(DataError::Empty(path.into()));
    }
    Ok(rows)
}

pub fn load_vectors(path: &Path, header: bool) -> Result<Dataset, DataError> {
    let rows = csv_rows(path, header)?;
    let dim = rows[0].1.len();
    let mut coords = Vec::with_capacity(rows.len() * dim);
    for (row, fields) in rows {
        for f in fields {
            let v: f64 = f.parse().map_err(|_| DataError::Row {
                path: path.into(),
                row,
                message: format!("not a number: {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Row { path: path.into(), row, message: format!("non-finite value {f:?}") });
            }
            coords.push(v);
        }
    }
    Ok(Dataset::from_vectors(dataset_name(path), dim, coords))
}

/// Every column is categorical; tokens compare by string equality.
pub fn load_categorical(path: &Path, header: bool) -> Result<Dataset, DataError> {
    let rows: Vec<Vec<String>> = csv_rows(path, header)?.into_iter().map(|r| r.1).collect();
    Ok(Dataset::from_tuples(dataset_name(path), &rows))
}

/// Parses `u v [w]` lines; `#` and `%` start comments. Only the largest
/// connected component is kept.
pub fn parse_edge_list(text: &str, path: &Path) -> Result<Vec<(u64, u64, f64)>, DataError> {
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i as u64 + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let bad = |message: String| DataError::Row { path: path.into(), row, message };
        let tok: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&tok.len()) {
            return Err(bad(format!("expected `u v [w]`, found {} fields", tok.len())));
        }
        let node = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("bad node id {s:?}")));
        let w = match tok.get(2) {
            Some(s) => s.parse::<f64>().map_err(|_| bad(format!("bad weight {s:?}")))?,
            None => 1.0,
        };
        edges.push((node(tok[0])?, node(tok[1])?, w));
    }
    Ok(edges)
}

pub fn load_edge_list(path: &Path) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: path.into(), source })?;
    let edges = parse_edge_list(&text, path)?;
    if edges.is_empty() {
        return Err(DataError::Empty(path.into()));
    }
    let graph = Graph::from_edges(&edges).map_err(|source| DataError::Graph { path: path.into(), source })?;
    Ok(Dataset::from_graph(dataset_name(path), graph))
}
