//! Filter selection: closest-pair greedy selection on a distance matrix, and
//! the l1-norm and geometric-median importance baselines.
//!
//! Indices are 0-based here; output layers convert to 1-based.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{PruneError, Result};
use crate::linalg::norm2;
use crate::nystrom::DistanceMatrix;
use crate::tensor_io::FilterTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPair {
    pub source: usize,
    pub target: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum SelectionMethod {
    SimilarityExact,
    SimilarityNystrom { m: usize, k: usize },
    L1,
    Gm,
}

impl SelectionMethod {
    pub fn label(&self) -> &'static str {
        match self {
            SelectionMethod::SimilarityExact => "similarity-exact",
            SelectionMethod::SimilarityNystrom { .. } => "similarity-nystrom",
            SelectionMethod::L1 => "l1",
            SelectionMethod::Gm => "gm",
        }
    }
}

/// How a sorted pair is rejected during greedy selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GreedyMode {
    /// Skip a pair only when its source is already redundant. An index can
    /// end up in both lists.
    #[default]
    Verbatim,
    /// Additionally skip a pair whose target is already important.
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    /// Kept filters, in acceptance order.
    pub important: Vec<usize>,
    /// Filters marked redundant, in marking order.
    pub redundant: Vec<usize>,
    /// Closest pairs sorted by distance (empty for norm baselines).
    pub pairs: Vec<ClosestPair>,
    pub method: SelectionMethod,
}

impl SelectionOutcome {
    /// Kept indices, ascending.
    pub fn keep_set(&self) -> Vec<usize> {
        let mut keep = self.important.clone();
        keep.sort_unstable();
        keep
    }
}

/// Distances closer than this are ties. Distances lie in `[0, 2]`, so
/// rounding noise in the similarity entries sits far below the grid.
pub const TIE_GRID: f64 = 1e-12;

/// Comparison key that makes values equal up to rounding compare equal.
/// The saturating cast keeps the key monotone for any input.
fn tie_key(distance: f64) -> i64 {
    (distance * (1.0 / TIE_GRID) + 0.5) as i64
}

/// For each filter, its nearest other filter (ties to the lowest index).
pub fn closest_pairs(z: &DistanceMatrix) -> Result<Vec<ClosestPair>> {
    let n = z.n();
    if n < 2 {
        return Err(PruneError::InvalidArgument(format!(
            "closest pairs need at least 2 filters, got {n}"
        )));
    }
    Ok((0..n)
        .map(|l| {
            let row = z.values.row(l);
            let mut target = if l == 0 { 1 } else { 0 };
            let mut best = tie_key(row[target]);
            for (j, &dist) in row.iter().enumerate() {
                if j != l {
                    let key = tie_key(dist);
                    if key < best {
                        best = key;
                        target = j;
                    }
                }
            }
            ClosestPair {
                source: l,
                target,
                distance: row[target],
            }
        })
        .collect())
}

fn by_distance(a: &ClosestPair, b: &ClosestPair) -> Ordering {
    tie_key(a.distance).cmp(&tie_key(b.distance))
}

/// Greedy closest-pair selection: walk pairs in ascending distance (stable
/// on ties) and keep each source not already marked redundant, marking its
/// target redundant.
pub fn greedy_select(
    pairs: &[ClosestPair],
    method: SelectionMethod,
    mode: GreedyMode,
) -> SelectionOutcome {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(by_distance);
    let n = pairs
        .iter()
        .map(|p| p.source.max(p.target) + 1)
        .max()
        .unwrap_or(0);
    let mut is_important = vec![false; n];
    let mut is_redundant = vec![false; n];
    let mut important = Vec::new();
    let mut redundant = Vec::new();
    for pair in &sorted {
        if is_redundant[pair.source] {
            continue;
        }
        if mode == GreedyMode::Strict && is_important[pair.target] {
            continue;
        }
        if !is_important[pair.source] {
            is_important[pair.source] = true;
            important.push(pair.source);
        }
        if !is_redundant[pair.target] {
            is_redundant[pair.target] = true;
            redundant.push(pair.target);
        }
    }
    SelectionOutcome {
        important,
        redundant,
        pairs: sorted,
        method,
    }
}

/// Closest pairs followed by greedy selection.
pub fn select_by_similarity(
    z: &DistanceMatrix,
    method: SelectionMethod,
    mode: GreedyMode,
) -> Result<SelectionOutcome> {
    let pairs = closest_pairs(z)?;
    Ok(greedy_select(&pairs, method, mode))
}

/// Filter indices ordered by descending sum of absolute weights; ties go to
/// the lower index.
pub fn l1_ranking(layer: &FilterTensor) -> Vec<usize> {
    let importance: Vec<f64> = layer
        .filters()
        .map(|f| f.iter().map(|&x| f64::from(x).abs()).sum())
        .collect();
    rank_descending(&importance)
}

fn rank_descending(importance: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importance.len()).collect();
    order.sort_by(|&a, &b| {
        importance[b]
            .partial_cmp(&importance[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GmMode {
    /// Distance to the Weiszfeld geometric median.
    #[default]
    Weiszfeld,
    /// Sum of distances to all other filters.
    Surrogate,
}

pub const WEISZFELD_TOL: f64 = 1e-9;
pub const WEISZFELD_MAX_ITER: usize = 10_000;

/// Geometric median of `points` (all of equal length) by Weiszfeld iteration.
///
/// Starts from the centroid. The sample point nearest each iterate is
/// returned as soon as it satisfies the optimality condition for a median
/// located at a sample. An iterate that lands on a non-optimal data point is
/// nudged off it and the iteration resumes.
pub fn geometric_median(points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = points.first() else {
        return Err(PruneError::InvalidArgument(
            "geometric median of an empty set".into(),
        ));
    };
    let dim = first.len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(PruneError::DimensionMismatch(
            "points of differing length".into(),
        ));
    }
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0_f64, |m, x| m.max(x.abs()));
    let tol = WEISZFELD_TOL * scale.max(1.0);
    let coincide = 1e-14 * scale.max(1.0);

    let mut y = vec![0.0; dim];
    for p in points {
        for (yi, pi) in y.iter_mut().zip(p) {
            *yi += pi;
        }
    }
    y.iter_mut().for_each(|x| *x /= points.len() as f64);

    let mut nudges = 0usize;
    let mut movement = f64::INFINITY;
    for _ in 0..WEISZFELD_MAX_ITER {
        let dists: Vec<f64> = points.iter().map(|p| distance(&y, p)).collect();
        // Iterates approach a median that sits on a sample point only
        // sublinearly, so test the nearest sample for optimality directly.
        let nearest = (0..dists.len())
            .min_by(|&a, &b| dists[a].total_cmp(&dists[b]))
            .expect("non-empty");
        if dists[nearest] > coincide && sample_is_unique_median(points, nearest, coincide) {
            return Ok(points[nearest].clone());
        }
        if let Some(hit) = dists.iter().position(|&d| d <= coincide) {
            if sample_is_median(points, hit, coincide) {
                return Ok(points[hit].clone());
            }
            nudges += 1;
            let bump = tol * 10.0 * nudges as f64;
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += bump * if i % 2 == 0 { 1.0 } else { -0.5 };
            }
            continue;
        }
        let mut num = vec![0.0; dim];
        let mut den = 0.0;
        for (p, &d) in points.iter().zip(&dists) {
            let w = 1.0 / d;
            den += w;
            for (ni, pi) in num.iter_mut().zip(p) {
                *ni += w * pi;
            }
        }
        let next: Vec<f64> = num.iter().map(|x| x / den).collect();
        movement = distance(&next, &y);
        y = next;
        if movement < tol {
            return Ok(y);
        }
    }
    Err(PruneError::NoConvergence {
        what: "Weiszfeld geometric median".into(),
        iterations: WEISZFELD_MAX_ITER,
        residual: movement,
    })
}

/// Length of the summed unit vectors from the other points towards `x_j`,
/// and the number of copies of `x_j`.
fn sample_pull(points: &[Vec<f64>], j: usize, coincide: f64) -> (f64, usize) {
    let x = &points[j];
    let mut pull = vec![0.0; x.len()];
    let mut copies = 0usize;
    for p in points {
        let d = distance(x, p);
        if d <= coincide {
            copies += 1;
            continue;
        }
        for ((pu, xi), pi) in pull.iter_mut().zip(x).zip(p) {
            *pu += (xi - pi) / d;
        }
    }
    (norm2(&pull), copies)
}

/// A sample point `x_j` is a geometric median iff the pull is no longer
/// than the number of copies of `x_j`.
fn sample_is_median(points: &[Vec<f64>], j: usize, coincide: f64) -> bool {
    let (pull, copies) = sample_pull(points, j, coincide);
    pull <= copies as f64 * (1.0 + 1e-12)
}

/// With a strictly shorter pull every direction increases the objective, so
/// `x_j` is the only median (unlike, say, either end of a two-point set).
fn sample_is_unique_median(points: &[Vec<f64>], j: usize, coincide: f64) -> bool {
    let (pull, copies) = sample_pull(points, j, coincide);
    pull < copies as f64 * (1.0 - 1e-9)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Filter indices ordered by descending distance from the geometric median
/// (filters near the median are the least important).
///
/// Distances are compared on a grid of `1e-9` relative to the largest one,
/// so that numerically equal distances fall back to the index tie rule.
pub fn gm_ranking(layer: &FilterTensor, mode: GmMode) -> Result<Vec<usize>> {
    if layer.n() < 2 {
        return Err(PruneError::InvalidArgument(format!(
            "geometric-median ranking needs at least 2 filters, got {}",
            layer.n()
        )));
    }
    let points: Vec<Vec<f64>> = layer
        .filters()
        .map(|f| f.iter().map(|&x| f64::from(x)).collect())
        .collect();
    let importance: Vec<f64> = match mode {
        GmMode::Weiszfeld => {
            let median = geometric_median(&points)?;
            points.iter().map(|p| distance(p, &median)).collect()
        }
        GmMode::Surrogate => points
            .iter()
            .map(|p| points.iter().map(|q| distance(p, q)).sum())
            .collect(),
    };
    let top = importance.iter().fold(0.0_f64, |m, &x| m.max(x));
    let quantized: Vec<f64> = if top > 0.0 {
        importance
            .iter()
            .map(|&x| (x / top * 1e9).round())
            .collect()
    } else {
        importance
    };
    Ok(rank_descending(&quantized))
}

/// The first `count` entries of `ranking`, ascending.
pub fn keep_top(ranking: &[usize], count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > ranking.len() {
        return Err(PruneError::InvalidArgument(format!(
            "keep count {count} outside 1..={}",
            ranking.len()
        )));
    }
    let mut keep = ranking[..count].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Outcome for a norm baseline: the top `count` filters are important, the
/// rest redundant.
pub fn baseline_outcome(
    ranking: &[usize],
    count: usize,
    method: SelectionMethod,
) -> Result<SelectionOutcome> {
    let important = keep_top(ranking, count)?;
    let mut redundant = ranking[count..].to_vec();
    redundant.sort_unstable();
    Ok(SelectionOutcome {
        important,
        redundant,
        pairs: Vec::new(),
        method,
    })
}
