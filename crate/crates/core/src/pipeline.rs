//! Per-layer similarity pruning: similarity, distance, greedy selection, and
//! the δ-threshold search for the Nyström column count and rank.

use serde::{Deserialize, Serialize};

use crate::error::{PruneError, Result};
use crate::nystrom::{
    approximation_error, exact_similarity, to_distance, ColumnSelection, DistanceMatrix,
    ErrorNorm, NystromModel, SimilarityResult,
};
use crate::representatives::RepresentativeMatrix;
use crate::selection::{greedy_select, closest_pairs, GreedyMode, SelectionMethod, SelectionOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMethod {
    Exact,
    Nystrom {
        m: usize,
        k: usize,
        selection: ColumnSelection,
    },
}

impl SimilarityMethod {
    pub fn nystrom(m: usize, k: usize) -> Self {
        SimilarityMethod::Nystrom {
            m,
            k,
            selection: ColumnSelection::First,
        }
    }

    pub fn selection_method(&self) -> SelectionMethod {
        match *self {
            SimilarityMethod::Exact => SelectionMethod::SimilarityExact,
            SimilarityMethod::Nystrom { m, k, .. } => SelectionMethod::SimilarityNystrom { m, k },
        }
    }
}

pub fn similarity(r: &RepresentativeMatrix, method: &SimilarityMethod) -> Result<SimilarityResult> {
    match *method {
        SimilarityMethod::Exact => Ok(exact_similarity(r)),
        SimilarityMethod::Nystrom { m, k, selection } => {
            if k == 0 || k > m {
                return Err(PruneError::InvalidArgument(format!(
                    "rank k = {k} outside 1..={m}"
                )));
            }
            NystromModel::fit(r, m, selection)?.similarity(k)
        }
    }
}

/// The timed unit of work: similarity, distance and greedy selection.
pub fn select_layer(
    r: &RepresentativeMatrix,
    method: &SimilarityMethod,
    mode: GreedyMode,
) -> Result<SelectionOutcome> {
    let sim = similarity(r, method)?;
    let z = to_distance(&sim);
    let pairs = closest_pairs(&z)?;
    Ok(greedy_select(&pairs, method.selection_method(), mode))
}

/// Column count and rank picked by [`auto_mk`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoChoice {
    pub m: usize,
    pub k: usize,
    pub delta: f64,
}

/// Smallest `m` (with `k = m`) whose approximation error is below
/// `threshold`, then the smallest `k <= m` that keeps it below, found by
/// bisection on the assumption that the error does not grow with `k`.
pub fn auto_mk(
    r: &RepresentativeMatrix,
    exact: &DistanceMatrix,
    threshold: f64,
    norm: ErrorNorm,
    selection: ColumnSelection,
) -> Result<AutoChoice> {
    if !(threshold > 0.0) {
        return Err(PruneError::InvalidArgument(format!(
            "delta threshold must be positive, got {threshold}"
        )));
    }
    let delta_of = |model: &NystromModel, k: usize| -> Result<f64> {
        let approx = to_distance(&model.similarity(k)?);
        approximation_error(exact, &approx, norm)
    };
    for m in 1..=r.n() {
        let model = NystromModel::fit(r, m, selection)?;
        let delta_m = delta_of(&model, m)?;
        if delta_m >= threshold {
            continue;
        }
        let (mut lo, mut hi, mut best) = (1, m, delta_m);
        while lo < hi {
            let mid = (lo + hi) / 2;
            let d = delta_of(&model, mid)?;
            if d < threshold {
                hi = mid;
                best = d;
            } else {
                lo = mid + 1;
            }
        }
        return Ok(AutoChoice { m, k: hi, delta: best });
    }
    Err(PruneError::InvalidArgument(format!(
        "no column count reaches delta < {threshold}"
    )))
}
