//! Rank-1 representatives of convolutional filters.
//!
//! Each `w x h x c` filter is viewed as a `d x c` matrix (`d = w*h`); its
//! representative is the unit-norm dominant left singular vector of that
//! matrix, with a deterministic sign.

use rayon::prelude::*;

use crate::error::{PruneError, Result};
use crate::linalg::{dominant_eigenpair_psd, jacobi_eigen, norm2, Matrix};
use crate::tensor_io::FilterTensor;

/// Frobenius norm below which a filter is treated as dead.
pub const DEGENERATE_NORM: f64 = 1e-12;
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 10_000;
/// Tolerance for the unit-norm invariant on representative columns.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// View one filter (weights ordered width, height, channel) as a `d x c`
/// matrix whose entry `(i*h + j, ch)` is the weight at `(i, j, ch)`.
pub fn reshape_filter(filter: &[f32], w: usize, h: usize, c: usize) -> Result<Matrix> {
    if filter.len() != w * h * c || c == 0 {
        return Err(PruneError::DimensionMismatch(format!(
            "{} weights for a {w}x{h}x{c} filter",
            filter.len()
        )));
    }
    Matrix::from_vec(w * h, c, filter.iter().map(|&x| f64::from(x)).collect())
}

/// Flip `v` so that its largest-magnitude entry (lowest index on ties) is
/// non-negative.
pub fn canonicalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Representative {
    pub vector: Vec<f64>,
    /// Set when the source filter is (numerically) all zeros.
    pub degenerate: bool,
}

/// Dominant left singular vector of `mat`, sign-canonicalized.
///
/// Computed by power iteration on `(mat matᵀ)^4`, which shares its dominant
/// eigenvector with `mat matᵀ` but separates it four times faster (in log
/// terms) when the top singular values are close.
pub fn filter_representative(mat: &Matrix) -> Result<Representative> {
    let d = mat.rows();
    if mat.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(PruneError::InvalidArgument(
            "filter matrix contains non-finite values".into(),
        ));
    }
    if mat.frobenius_norm() < DEGENERATE_NORM {
        return Ok(Representative {
            vector: vec![0.0; d],
            degenerate: true,
        });
    }

    let mut gram = mat.gram_rows();
    for _ in 0..2 {
        let scale = gram.max_abs();
        gram = gram.map(|x| x / scale).gram_rows();
    }
    let start = vec![1.0 / (d as f64).sqrt(); d];
    let result = dominant_eigenpair_psd(&gram, &start, POWER_TOL, POWER_MAX_ITER)?;

    let mut vector = result.vector;
    let len = norm2(&vector);
    vector.iter_mut().for_each(|x| *x /= len);
    canonicalize_sign(&mut vector);
    Ok(Representative {
        vector,
        degenerate: false,
    })
}

/// Representative matrix `R` (`d x n`), stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeMatrix {
    d: usize,
    n: usize,
    columns: Vec<f64>,
    degenerate: Vec<bool>,
}

impl RepresentativeMatrix {
    /// Build from explicit columns. Each column must be unit-norm (within
    /// [`UNIT_NORM_TOL`]) or exactly zero; zero columns are flagged
    /// degenerate. Columns are used as given, without sign canonicalization.
    pub fn from_columns(d: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        if d == 0 || columns.is_empty() {
            return Err(PruneError::InvalidArgument(
                "representative matrix needs d >= 1 and at least one column".into(),
            ));
        }
        let mut degenerate = Vec::with_capacity(columns.len());
        for (l, col) in columns.iter().enumerate() {
            if col.len() != d {
                return Err(PruneError::DimensionMismatch(format!(
                    "column {} has length {} (expected {d})",
                    l + 1,
                    col.len()
                )));
            }
            let norm = norm2(col);
            if !norm.is_finite() {
                return Err(PruneError::InvalidArgument(format!(
                    "column {} is not finite",
                    l + 1
                )));
            }
            if norm == 0.0 {
                degenerate.push(true);
            } else if (norm - 1.0).abs() <= UNIT_NORM_TOL {
                degenerate.push(false);
            } else {
                return Err(PruneError::InvalidArgument(format!(
                    "column {} has norm {norm} (expected 1 or 0)",
                    l + 1
                )));
            }
        }
        Ok(RepresentativeMatrix {
            d,
            n: columns.len(),
            columns: columns.concat(),
            degenerate,
        })
    }

    /// Normalize arbitrary columns to unit length (zero columns stay zero).
    pub fn from_unnormalized(d: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let columns = columns
            .into_iter()
            .map(|mut c| {
                let norm = norm2(&c);
                if norm >= DEGENERATE_NORM {
                    c.iter_mut().for_each(|x| *x /= norm);
                } else {
                    c.iter_mut().for_each(|x| *x = 0.0);
                }
                c
            })
            .collect();
        Self::from_columns(d, columns)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Column `l` (0-based).
    pub fn column(&self, l: usize) -> &[f64] {
        &self.columns[l * self.d..(l + 1) * self.d]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.columns.chunks_exact(self.d)
    }

    pub fn is_degenerate(&self, l: usize) -> bool {
        self.degenerate[l]
    }

    pub fn degenerate_flags(&self) -> &[bool] {
        &self.degenerate
    }

    /// `Rᵀ` as an `n x d` matrix (one representative per row).
    pub fn transposed(&self) -> Matrix {
        Matrix::from_vec(self.n, self.d, self.columns.clone()).expect("consistent shape")
    }
}

/// Stack the representatives of every filter of `layer`, in filter order.
pub fn build_representative_matrix(layer: &FilterTensor) -> Result<RepresentativeMatrix> {
    let (w, h, c) = (layer.width(), layer.height(), layer.channels());
    let reps: Vec<Representative> = (0..layer.n())
        .into_par_iter()
        .map(|l| {
            let mat = reshape_filter(layer.filter(l), w, h, c)?;
            filter_representative(&mat).map_err(|e| match e {
                PruneError::NoConvergence {
                    what,
                    iterations,
                    residual,
                } => PruneError::NoConvergence {
                    what: format!("{what} (filter {})", l + 1),
                    iterations,
                    residual,
                },
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let d = w * h;
    let degenerate = reps.iter().map(|r| r.degenerate).collect();
    let columns = reps.into_iter().flat_map(|r| r.vector).collect();
    Ok(RepresentativeMatrix {
        d,
        n: layer.n(),
        columns,
        degenerate,
    })
}

/// Number of singular values of `R` above `rel_tol` times the largest.
pub fn numerical_rank(r: &RepresentativeMatrix, rel_tol: f64) -> Result<usize> {
    let d = r.d();
    let mut gram = Matrix::zeros(d, d);
    for col in r.columns() {
        for a in 0..d {
            let row = gram.row_mut(a);
            for b in 0..d {
                row[b] += col[a] * col[b];
            }
        }
    }
    let eig = jacobi_eigen(&gram, 1e-14)?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Ok(0);
    }
    // Eigenvalues of R Rᵀ are squared singular values.
    let cut = (rel_tol * rel_tol) * top;
    Ok(eig.values.iter().filter(|&&v| v > cut).count())
}
