//! Bound calculators and empirical estimates of the expansion constants the
//! comparison tree's guarantees are stated in.
//!
//! Logarithms are natural throughout.

use std::collections::HashSet;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comptree::{split_members, SplitCost};
use crate::metric::{Dataset, PointId, Probe, ResolvedQuery};
use crate::oracle::TripletOracle;
use crate::rng;

/// Default cap on the number of points whose expansion rate is estimated.
pub const DEFAULT_SAMPLE_CAP: usize = 10_000;

/// Resolution of [`estimate_growth_exponent`].
pub const GROWTH_GRID: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("{0}")]
    Invalid(String),
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<(), DomainError> {
    if ok {
        Ok(())
    } else {
        Err(DomainError::Invalid(msg()))
    }
}

/// High-probability height bound `3 ln(e/ε) + 96 c̃² ln(n/n0)`.
pub fn height_bound(n: usize, n0: usize, c_tilde: f64, epsilon: f64) -> Result<f64, DomainError> {
    require(n0 >= 1 && n0 <= n, || format!("need 1 <= n0 <= n, got n0 = {n0}, n = {n}"))?;
    require(c_tilde >= 1.0, || format!("c_tilde must be >= 1, got {c_tilde}"))?;
    require(epsilon > 0.0, || format!("epsilon must be positive, got {epsilon}"))?;
    Ok(3.0 * (std::f64::consts::E / epsilon).ln() + 96.0 * c_tilde * c_tilde * (n as f64 / n0 as f64).ln())
}

/// Triplets needed to build a tree whose height is below `h_star`: `n·h*`.
pub fn construction_budget(n: usize, h_star: f64) -> f64 {
    n as f64 * h_star
}

/// Triplets needed per defeatist query: `h* + n0`.
pub fn query_budget(h_star: f64, n0: usize) -> f64 {
    h_star + n0 as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub raw: f64,
    /// `min(1, raw)`, the value usable as a probability.
    pub clamped: f64,
}

/// Bound `360 C c̃² n0^(-α) / α` on the probability of missing the exact
/// nearest neighbor. `C` and `α` are supplied by the caller.
pub fn error_bound(c: f64, alpha: f64, c_tilde: f64, n0: usize) -> Result<ErrorBound, DomainError> {
    require(c > 0.0, || format!("C must be positive, got {c}"))?;
    require(alpha > 0.0 && alpha <= 1.0, || format!("alpha must lie in (0, 1], got {alpha}"))?;
    require(c_tilde >= 1.0, || format!("c_tilde must be >= 1, got {c_tilde}"))?;
    require(n0 >= 1, || "n0 must be at least 1".into())?;
    let raw = 360.0 * c * c_tilde * c_tilde * (n0 as f64).powf(-alpha) / alpha;
    Ok(ErrorBound { raw, clamped: raw.min(1.0) })
}

/// Every bound evaluated for one parameter set, with its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub n0: usize,
    pub c_tilde: f64,
    pub epsilon: f64,
    pub h_star: f64,
    pub construction_budget: f64,
    pub query_budget: f64,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub alpha: Option<f64>,
    pub error_bound_raw: Option<f64>,
    pub error_bound_clamped: Option<f64>,
}

impl BoundReport {
    pub fn evaluate(
        n: usize,
        n0: usize,
        c_tilde: f64,
        epsilon: f64,
        c_alpha: Option<(f64, f64)>,
    ) -> Result<BoundReport, DomainError> {
        let h_star = height_bound(n, n0, c_tilde, epsilon)?;
        let err = c_alpha.map(|(c, a)| error_bound(c, a, c_tilde, n0)).transpose()?;
        Ok(BoundReport {
            n,
            n0,
            c_tilde,
            epsilon,
            h_star,
            construction_budget: construction_budget(n, h_star),
            query_budget: query_budget(h_star, n0),
            c: c_alpha.map(|p| p.0),
            alpha: c_alpha.map(|p| p.1),
            error_bound_raw: err.map(|e| e.raw),
            error_bound_clamped: err.map(|e| e.clamped),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionProfile {
    /// `(x, c̃(x))` in sample order.
    pub points: Vec<(PointId, f64)>,
    pub dataset_max: f64,
    pub sample_size: usize,
}

impl ExpansionProfile {
    /// `point_id,c_tilde` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point_id,c_tilde\n");
        for (id, c) in &self.points {
            out.push_str(&format!("{id},{c}\n"));
        }
        out
    }
}

/// Number of sorted distances at most `r`.
/// Smallest radius ratio considered by [`estimate_growth_exponent`].
pub const MIN_LAMBDA: f64 = 2.0;

/// Relative slack on ball radii. Distances that are equal in exact
/// arithmetic can differ in the last bits once coordinates are scaled.
const RADIUS_TOLERANCE: f64 = 1e-9;

fn ball(sorted: &[f64], r: f64) -> usize {
    let r = r * (1.0 + RADIUS_TOLERANCE);
    sorted.partition_point(|&d| d <= r)
}

fn sorted_distances(dataset: &Dataset, probe: &Probe, within: &[PointId], exclude: Option<PointId>) -> Vec<f64> {
    let mut d: Vec<f64> =
        within.iter().filter(|&&p| Some(p) != exclude).map(|&p| dataset.probe_distance(probe, p)).collect();
    d.sort_unstable_by(f64::total_cmp);
    d
}

/// Smallest `c` with `|B(x, 2r) ∩ A| <= c |B(x, r) ∩ A|` for every `r > 0`,
/// where `A = within` and balls are closed. `x` must belong to `within`.
///
/// Both counts are right-continuous step functions of `r` that only change
/// at the distances from `x` and at their halves, so those radii suffice.
pub fn pointwise_expansion(dataset: &Dataset, x: PointId, within: &[PointId]) -> f64 {
    let dist = sorted_distances(dataset, &Probe::Point(x), within, None);
    let mut best = 1.0f64;
    let mut prev = f64::NAN;
    for &d in dist.iter().filter(|&&d| d > 0.0) {
        if d == prev {
            continue;
        }
        prev = d;
        for r in [d, d / 2.0] {
            let inner = ball(&dist, r);
            if inner > 0 {
                best = best.max(ball(&dist, 2.0 * r) as f64 / inner as f64);
            }
        }
    }
    best
}

/// Pointwise expansion rates of `sample` relative to `within`, computed in
/// parallel. Every sampled point must be a member of `within`.
pub fn empirical_expansion_rate(
    dataset: &Dataset,
    within: &[PointId],
    sample: &[PointId],
) -> Result<ExpansionProfile, DomainError> {
    require(within.len() >= 2, || "expansion rates need at least two points".into())?;
    require(!sample.is_empty(), || "sample must be non-empty".into())?;
    let members: HashSet<PointId> = within.iter().copied().collect();
    require(sample.iter().all(|p| members.contains(p)), || "sampled points must belong to the set".into())?;
    let points: Vec<(PointId, f64)> =
        sample.par_iter().map(|&x| (x, pointwise_expansion(dataset, x, within))).collect();
    let dataset_max = points.iter().map(|p| p.1).fold(1.0, f64::max);
    Ok(ExpansionProfile { sample_size: points.len(), points, dataset_max })
}

/// Up to `cap` members drawn without replacement, in ascending order.
pub fn sample_members(members: &[PointId], cap: usize, seed: u64) -> Vec<PointId> {
    if members.len() <= cap {
        return members.to_vec();
    }
    let mut rng = rng::stream(seed, rng::ROOT_KEY);
    let mut out: Vec<PointId> = index::sample(&mut rng, members.len(), cap).into_iter().map(|i| members[i]).collect();
    out.sort_unstable();
    out
}

/// Smallest `D >= 1`, rounded up to [`GROWTH_GRID`], such that
/// `|B(q, λr) ∩ A| <= λ^D |B(q, r) ∩ A|` for every pair of breakpoint radii
/// `r < λr` with `λ >= 2` and `r` at least the nearest-neighbor distance of
/// `q`. Without a floor on `λ` any jump in the ball count would force an
/// unbounded `D` as `λ` approaches 1.
///
/// Checking `r` at the nearest-neighbor distance itself stands in for the
/// limit `r ↓ d(q, x_q)`, where the ball counts are the same.
pub fn estimate_growth_exponent(dataset: &Dataset, within: &[PointId], query: &ResolvedQuery) -> Result<f64, DomainError> {
    let dist = sorted_distances(dataset, &query.probe, within, query.exclude);
    require(dist.len() >= 2, || "growth exponent needs at least two points".into())?;
    let nearest = dist[0];
    let mut radii: Vec<f64> = dist.iter().copied().filter(|&d| d >= nearest && d > 0.0).collect();
    radii.dedup();
    require(!radii.is_empty(), || "query coincides with every point".into())?;
    let counts: Vec<f64> = radii.iter().map(|&r| ball(&dist, r) as f64).collect();
    let mut worst = 1.0f64;
    for a in 0..radii.len() {
        let far = radii.partition_point(|&r| r < MIN_LAMBDA * radii[a] * (1.0 - RADIUS_TOLERANCE));
        for b in far..radii.len() {
            worst = worst.max((counts[b] / counts[a]).ln() / (radii[b] / radii[a]).ln());
        }
    }
    Ok(((worst - 1e-9) / GROWTH_GRID).ceil().max(1.0 / GROWTH_GRID) * GROWTH_GRID)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceTrial {
    pub set_size: usize,
    pub delta: f64,
    pub trials: u64,
    pub unbalanced: u64,
    pub fraction: f64,
}

/// Repeats the comparison tree's random split of `members` and reports how
/// often a child ends up with fewer than `delta·|A|` points.
pub fn split_balance_trial<O: TripletOracle>(
    oracle: &O,
    members: &[PointId],
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<BalanceTrial, DomainError> {
    require(members.len() >= 2, || "split trials need at least two points".into())?;
    require(delta > 0.0 && delta < 1.0, || format!("delta must lie in (0, 1), got {delta}"))?;
    require(trials >= 1, || "need at least one trial".into())?;
    let threshold = delta * members.len() as f64;
    let mut unbalanced = 0;
    for t in 0..trials {
        let mut stream = rng::stream(seed, rng::splitmix64(t));
        let smaller = split_members(members, &mut stream, oracle, &mut SplitCost::default())
            .map_or(0, |s| s.left.len().min(s.right.len()));
        if (smaller as f64) < threshold {
            unbalanced += 1;
        }
    }
    Ok(BalanceTrial { set_size: members.len(), delta, trials, unbalanced, fraction: unbalanced as f64 / trials as f64 })
}

/// Upper limit the unbalanced fraction must respect: `4 c̃² δ` plus
/// `sigmas` binomial standard errors at that rate.
pub fn balance_allowance(c_tilde: f64, delta: f64, trials: u64, sigmas: f64) -> f64 {
    let p = (4.0 * c_tilde * c_tilde * delta).min(1.0);
    p + sigmas * (p * (1.0 - p) / trials as f64).sqrt()
}
