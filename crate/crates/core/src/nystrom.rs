//! Exact and Nyström-approximated filter similarity matrices.
//!
//! The exact similarity is `S = RᵀR`. The Nyström route samples `m` columns
//! `C` of `S` (with `W` the `m x m` block they share with their rows) and
//! reconstructs `S̃ = C W_k⁺ Cᵀ` from the top `k` eigenpairs of `W`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PruneError, Result};
use crate::linalg::{dot, jacobi_eigen, pivoted_cholesky, spectral_norm, Matrix};
use crate::representatives::RepresentativeMatrix;

/// Relative eigenvalue floor for the truncated pseudo-inverse of `W`.
pub const PINV_REL_FLOOR: f64 = 1e-10;
pub const JACOBI_TOL: f64 = 1e-12;
pub const NORM_REL_TOL: f64 = 1e-13;
pub const NORM_ABS_TOL: f64 = 1e-15;
pub const NORM_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Exact,
    Nystrom {
        m: usize,
        k: usize,
        /// Number of eigenpairs of `W` actually used (`<= k`).
        effective_rank: usize,
        /// Sampled column indices, 0-based.
        columns: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityResult {
    pub values: Matrix,
    pub provenance: Provenance,
    /// Error against the exact matrix, when it has been measured.
    pub delta: Option<f64>,
}

impl SimilarityResult {
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }
}

/// Pairwise cosine distances, `1 - similarity`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub values: Matrix,
    pub provenance: Provenance,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn from_matrix(values: Matrix) -> Result<Self> {
        if values.rows() != values.cols() {
            return Err(PruneError::DimensionMismatch(format!(
                "distance matrix must be square, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        Ok(DistanceMatrix {
            values,
            provenance: Provenance::Exact,
        })
    }
}

/// Which columns of `S` the Nyström route samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColumnSelection {
    /// Columns `1..=m` in filter order.
    #[default]
    First,
    /// `m` columns uniformly without replacement, sorted ascending.
    Random { seed: u64 },
}

impl ColumnSelection {
    pub fn indices(&self, n: usize, m: usize) -> Vec<usize> {
        match *self {
            ColumnSelection::First => (0..m).collect(),
            ColumnSelection::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut idx = sample(&mut rng, n, m).into_vec();
                idx.sort_unstable();
                idx
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorNorm {
    #[default]
    Spectral,
    Frobenius,
}

pub fn exact_similarity(r: &RepresentativeMatrix) -> SimilarityResult {
    SimilarityResult {
        values: r.transposed().gram_rows(),
        provenance: Provenance::Exact,
        delta: None,
    }
}

/// Sampled columns of `S` and the eigendecomposition of their `W` block,
/// reusable across ranks `k`.
#[derive(Debug, Clone)]
pub struct NystromModel {
    columns: Vec<usize>,
    /// `n x m` block of sampled columns.
    c: Matrix,
    /// Eigenvalues of `W` above the floor, descending.
    eigenvalues: Vec<f64>,
    /// `m x r` eigenvectors of `W` matching `eigenvalues`.
    eigenvectors: Matrix,
}

impl NystromModel {
    pub fn fit(r: &RepresentativeMatrix, m: usize, selection: ColumnSelection) -> Result<Self> {
        let n = r.n();
        if m == 0 || m > n {
            return Err(PruneError::InvalidArgument(format!(
                "column count m = {m} outside 1..={n}"
            )));
        }
        let columns = selection.indices(n, m);
        let sampled: Vec<&[f64]> = columns.iter().map(|&j| r.column(j)).collect();
        let c = Matrix::from_fn(n, m, |i, a| dot(r.column(i), sampled[a]));
        let w = Matrix::from_fn(m, m, |a, b| c[(columns[a], b)]);
        let (eigenvalues, eigenvectors) = psd_eigenpairs(&w)?;
        Ok(NystromModel {
            columns,
            c,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// Eigenvalues of `W` that clear the pseudo-inverse floor.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Factor `G` (`n x k_eff`) with `C W_k⁺ Cᵀ = G Gᵀ`.
    pub fn factor(&self, k: usize) -> Result<Matrix> {
        let m = self.m();
        if k == 0 || k > m {
            return Err(PruneError::InvalidArgument(format!(
                "rank k = {k} outside 1..={m}"
            )));
        }
        let keep = k.min(self.eigenvalues.len());
        let n = self.c.rows();
        let mut g = Matrix::zeros(n, keep);
        // Column j of G is C u_j / sqrt(sigma_j).
        for j in 0..keep {
            let inv_sqrt = 1.0 / self.eigenvalues[j].sqrt();
            let u: Vec<f64> = (0..m).map(|a| self.eigenvectors[(a, j)]).collect();
            for i in 0..n {
                g[(i, j)] = dot(self.c.row(i), &u) * inv_sqrt;
            }
        }
        Ok(g)
    }

    pub fn similarity(&self, k: usize) -> Result<SimilarityResult> {
        let g = self.factor(k)?;
        Ok(SimilarityResult {
            provenance: Provenance::Nystrom {
                m: self.m(),
                k,
                effective_rank: g.cols(),
                columns: self.columns.clone(),
            },
            values: g.gram_rows(),
            delta: None,
        })
    }
}

/// Eigenpairs of the PSD block `W` with eigenvalue above
/// `PINV_REL_FLOOR * sigma_1`, descending.
///
/// `W` is first compressed by a pivoted Cholesky factorization `W ≈ F Fᵀ`
/// (`F` is `m x r`); the nonzero eigenpairs of `F Fᵀ` follow from the small
/// `r x r` matrix `FᵀF = V Λ Vᵀ` as `u_j = F v_j / sqrt(λ_j)`. When the
/// Cholesky remainder is not negligible (an indefinite `W`), Jacobi runs on
/// `W` directly so that negative eigenvalues are reported.
fn psd_eigenpairs(w: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let m = w.rows();
    let max_diag = (0..m).map(|i| w[(i, i)]).fold(0.0_f64, f64::max);
    if max_diag <= 0.0 && w.max_abs() == 0.0 {
        return Ok((Vec::new(), Matrix::zeros(m, 0)));
    }
    // Remainder trace stays an order of magnitude below the eigenvalue floor.
    let chol_tol = 0.1 * PINV_REL_FLOOR * max_diag / m as f64;
    let chol = pivoted_cholesky(w, chol_tol)?;
    let f = &chol.factor;

    let core = f.transpose().matmul(f)?;
    let eig = jacobi_eigen(&core, JACOBI_TOL)?;
    let sigma1 = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = PINV_REL_FLOOR * sigma1;

    if chol.residual > floor.max(f64::MIN_POSITIVE) || chol.min_pivot < -floor {
        return direct_eigenpairs(w);
    }

    let kept: Vec<usize> = (0..eig.values.len())
        .filter(|&j| eig.values[j] > floor)
        .collect();
    let values: Vec<f64> = kept.iter().map(|&j| eig.values[j]).collect();
    let mut vectors = Matrix::zeros(m, kept.len());
    for (col, &j) in kept.iter().enumerate() {
        let scale = 1.0 / eig.values[j].sqrt();
        for a in 0..m {
            let s: f64 = (0..f.cols()).map(|t| f[(a, t)] * eig.vectors[(t, j)]).sum();
            vectors[(a, col)] = s * scale;
        }
    }
    Ok((values, vectors))
}

fn direct_eigenpairs(w: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let m = w.rows();
    let eig = jacobi_eigen(w, JACOBI_TOL)?;
    let sigma1 = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = PINV_REL_FLOOR * sigma1;
    if let Some(&lowest) = eig.values.last() {
        if lowest < -floor {
            return Err(PruneError::NegativeEigenvalue {
                value: lowest,
                floor,
            });
        }
    }
    let kept: Vec<usize> = (0..m).filter(|&j| eig.values[j] > floor).collect();
    let values = kept.iter().map(|&j| eig.values[j]).collect();
    let vectors = Matrix::from_fn(m, kept.len(), |a, c| eig.vectors[(a, kept[c])]);
    Ok((values, vectors))
}

/// Rank-`k` Nyström approximation of `S` from its first `m` columns.
pub fn nystrom_similarity(
    r: &RepresentativeMatrix,
    m: usize,
    k: usize,
) -> Result<SimilarityResult> {
    nystrom_similarity_with(r, m, k, ColumnSelection::First)
}

pub fn nystrom_similarity_with(
    r: &RepresentativeMatrix,
    m: usize,
    k: usize,
    selection: ColumnSelection,
) -> Result<SimilarityResult> {
    if k == 0 || k > m {
        return Err(PruneError::InvalidArgument(format!(
            "rank k = {k} outside 1..={m}"
        )));
    }
    NystromModel::fit(r, m, selection)?.similarity(k)
}

pub fn to_distance(sim: &SimilarityResult) -> DistanceMatrix {
    DistanceMatrix {
        values: sim.values.map(|s| 1.0 - s),
        provenance: sim.provenance.clone(),
    }
}

/// `‖Z − Z̃‖` in the requested norm. Since `Z − Z̃ = S̃ − S`, the same value
/// is the similarity-space error.
pub fn approximation_error(
    exact: &DistanceMatrix,
    approx: &DistanceMatrix,
    norm: ErrorNorm,
) -> Result<f64> {
    if exact.n() != approx.n() {
        return Err(PruneError::DimensionMismatch(format!(
            "distance matrices of order {} and {}",
            exact.n(),
            approx.n()
        )));
    }
    let diff = exact.values.sub(&approx.values)?;
    match norm {
        ErrorNorm::Spectral => spectral_norm(&diff, NORM_REL_TOL, NORM_ABS_TOL, NORM_MAX_ITER),
        ErrorNorm::Frobenius => Ok(diff.frobenius_norm()),
    }
}
