//! Small dense linear-algebra kernels used by the pruning pipeline.
//!
//! Matrices here are modest (the filter count of a single layer at most), so
//! everything is a plain row-major `Vec<f64>` with hand-written loops.

use std::ops::{Index, IndexMut};

use crate::error::{PruneError, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(PruneError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(PruneError::DimensionMismatch("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(PruneError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * selfᵀ`, exploiting symmetry of the result.
    pub fn gram_rows(&self) -> Matrix {
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            let ri = self.row(i);
            for j in i..n {
                let v = dot(ri, self.row(j));
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }

    /// `out = selfᵀ v`.
    pub fn matvec_transposed(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(PruneError::DimensionMismatch(format!(
                "{}x{} minus {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Largest `|a_ij - a_ji|`; infinite for non-square matrices.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns, matching `values`.
    pub vectors: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver. Stops once the off-diagonal Frobenius norm
/// falls below `tol` times the Frobenius norm of the input.
pub fn jacobi_eigen(a: &Matrix, tol: f64) -> Result<SymmetricEigen> {
    let n = a.rows();
    if n != a.cols() {
        return Err(PruneError::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();
    let threshold = tol * scale;

    let off_norm = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = scale == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&m) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off = off_norm(&m);
        if off > threshold {
            return Err(PruneError::NoConvergence {
                what: "Jacobi eigensolver".into(),
                iterations: JACOBI_MAX_SWEEPS,
                residual: off,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

/// Outcome of a power iteration on a symmetric positive semi-definite matrix.
#[derive(Debug, Clone)]
pub struct PowerResult {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Dominant eigenpair of a symmetric PSD matrix by power iteration.
///
/// Convergence is declared when the sine of the angle between successive
/// unit iterates, and the distance to the limit extrapolated from their
/// contraction rate, both drop below `tol`. Slow contraction triggers
/// squaring of the iterated operator. If the iterate collapses into the null
/// space, or settles on an eigenvalue smaller than some diagonal entry (which
/// bounds the dominant eigenvalue from below), the iteration restarts from the
/// coordinate vector of the largest diagonal entry.
pub fn dominant_eigenpair_psd(
    g: &Matrix,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<PowerResult> {
    let n = g.rows();
    let (diag_idx, diag_max) = (0..n)
        .map(|i| (i, g[(i, i)]))
        .fold((0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });

    let mut v = start.to_vec();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut restarted = false;
    loop {
        let result = power_from(g, v.clone(), tol, max_iter)?;
        let lower_bound = diag_max * (1.0 - 1e-12);
        let stuck = result.value < lower_bound;
        if !stuck || restarted {
            return Ok(result);
        }
        restarted = true;
        v = vec![0.0; n];
        v[diag_idx] = 1.0;
    }
}

/// Squarings allowed when the iteration contracts slowly.
const MAX_SQUARINGS: usize = 16;
/// Iterations between checks for slow contraction.
const SQUARING_CHECK: usize = 8;

fn power_from(g: &Matrix, mut v: Vec<f64>, tol: f64, max_iter: usize) -> Result<PowerResult> {
    let n = v.len();
    let mut w = vec![0.0; n];
    // Iterating on a normalized power of `g` keeps the dominant eigenvector
    // and widens the gap to the next eigenvalue.
    let mut op = g.clone();
    let mut squarings = 0;
    let mut prev_sin = f64::INFINITY;
    let rayleigh = |v: &[f64], w: &mut [f64]| {
        g.matvec(v, w);
        dot(v, w)
    };
    for iter in 1..=max_iter {
        op.matvec(&v, &mut w);
        let nw = norm2(&w);
        if nw == 0.0 {
            return Ok(PowerResult {
                value: 0.0,
                vector: v,
                iterations: iter,
            });
        }
        w.iter_mut().for_each(|x| *x /= nw);
        let c = dot(&v, &w);
        let sin = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - c * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut v, &mut w);

        // With contraction ratio r per step, the remaining distance to the
        // limit is about sin * r / (1 - r).
        let ratio = sin / prev_sin;
        let remaining = if ratio < 1.0 {
            sin * ratio / (1.0 - ratio)
        } else {
            sin
        };
        if sin < tol && remaining < tol {
            let value = rayleigh(&v, &mut w);
            return Ok(PowerResult {
                value,
                vector: v,
                iterations: iter,
            });
        }
        if iter % SQUARING_CHECK == 0 && ratio > 0.5 && squarings < MAX_SQUARINGS {
            let sq = op.gram_rows();
            let scale = sq.max_abs();
            if scale > 0.0 && scale.is_finite() {
                op = sq.map(|x| x / scale);
                squarings += 1;
                prev_sin = f64::INFINITY;
                continue;
            }
        }
        prev_sin = sin;
    }
    let lambda = rayleigh(&v, &mut w);
    let residual = w
        .iter()
        .zip(&v)
        .map(|(wi, vi)| (wi - lambda * vi).powi(2))
        .sum::<f64>()
        .sqrt();
    Err(PruneError::NoConvergence {
        what: "power iteration".into(),
        iterations: max_iter,
        residual,
    })
}

/// Deterministic start vector with no special alignment to structured
/// eigenvectors (all-ones, alternating signs, coordinate axes).
pub(crate) fn generic_start(n: usize) -> Vec<f64> {
    const PHI: f64 = 0.618_033_988_749_894_8;
    (0..n)
        .map(|i| ((i as f64 + 1.0) * PHI).fract() - 0.5 + 1e-3)
        .collect()
}

/// Spectral norm (largest singular value) by power iteration on `AᵀA`.
///
/// Stops when successive norm estimates differ by at most
/// `rel_tol * estimate + abs_tol`.
pub fn spectral_norm(a: &Matrix, rel_tol: f64, abs_tol: f64, max_iter: usize) -> Result<f64> {
    let (rows, cols) = (a.rows(), a.cols());
    if rows == 0 || cols == 0 || a.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let mut v = generic_start(cols);
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; rows];
    let mut y = vec![0.0; cols];
    let mut prev = 0.0;
    for iter in 0..max_iter {
        a.matvec(&v, &mut w);
        let estimate = norm2(&w);
        if estimate == 0.0 {
            // Start vector lies in the null space; restart from the column
            // with the largest norm.
            let col_norm = |j: usize| (0..rows).map(|i| a[(i, j)].powi(2)).sum::<f64>();
            let j = (0..cols)
                .max_by(|&p, &q| col_norm(p).total_cmp(&col_norm(q)))
                .unwrap_or(0);
            v.iter_mut().for_each(|x| *x = 0.0);
            v[j] = 1.0;
            continue;
        }
        if iter > 0 && (estimate - prev).abs() <= rel_tol * estimate + abs_tol {
            return Ok(estimate);
        }
        prev = estimate;
        a.matvec_transposed(&w, &mut y);
        let ny = norm2(&y);
        if ny == 0.0 {
            return Ok(estimate);
        }
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = yi / ny;
        }
    }
    Err(PruneError::NoConvergence {
        what: "spectral-norm power iteration".into(),
        iterations: max_iter,
        residual: prev,
    })
}

/// Diagonally pivoted Cholesky factorization of a symmetric PSD matrix,
/// truncated once every remaining pivot is at most `tol`.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    /// `m x r` factor with `W ≈ F Fᵀ`.
    pub factor: Matrix,
    /// Largest absolute entry of the untouched Schur complement.
    pub residual: f64,
    /// Most negative remaining pivot (0 when none is negative).
    pub min_pivot: f64,
}

pub fn pivoted_cholesky(w: &Matrix, tol: f64) -> Result<PivotedCholesky> {
    let m = w.rows();
    if m != w.cols() {
        return Err(PruneError::DimensionMismatch(format!(
            "Cholesky of a {}x{} matrix",
            w.rows(),
            w.cols()
        )));
    }
    let mut diag: Vec<f64> = (0..m).map(|i| w[(i, i)]).collect();
    let mut pivoted = vec![false; m];
    // Columns of F, each of length m.
    let mut cols: Vec<Vec<f64>> = Vec::new();
    loop {
        let next = (0..m)
            .filter(|&i| !pivoted[i])
            .max_by(|&i, &j| diag[i].total_cmp(&diag[j]).then(j.cmp(&i)));
        let Some(p) = next else { break };
        if diag[p] <= tol {
            break;
        }
        let pivot = diag[p].sqrt();
        let mut col: Vec<f64> = (0..m).map(|i| w[(i, p)]).collect();
        for prev in &cols {
            let f = prev[p];
            if f != 0.0 {
                for (c, x) in col.iter_mut().zip(prev) {
                    *c -= f * x;
                }
            }
        }
        for (i, c) in col.iter_mut().enumerate() {
            if pivoted[i] {
                *c = 0.0;
            } else {
                *c /= pivot;
            }
        }
        col[p] = pivot;
        pivoted[p] = true;
        for i in 0..m {
            if !pivoted[i] {
                diag[i] -= col[i] * col[i];
            }
        }
        cols.push(col);
    }

    let r = cols.len();
    let factor = Matrix::from_fn(m, r, |i, j| cols[j][i]);

    let rest: Vec<usize> = (0..m).filter(|&i| !pivoted[i]).collect();
    let mut residual = 0.0_f64;
    let mut min_pivot = 0.0_f64;
    for (a, &i) in rest.iter().enumerate() {
        min_pivot = min_pivot.min(diag[i]);
        for &j in &rest[a..] {
            let approx = dot(factor.row(i), factor.row(j));
            residual = residual.max((w[(i, j)] - approx).abs());
        }
    }
    Ok(PivotedCholesky {
        factor,
        residual,
        min_pivot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn jacobi_diagonal_input_is_sorted() {
        let a = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 3.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let e = jacobi_eigen(&a, 1e-12).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors[(1, 0)].abs(), 1.0);
    }

    #[test]
    fn jacobi_reconstructs_input() {
        let a = Matrix::from_fn(6, 6, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let e = jacobi_eigen(&a, 1e-12).unwrap();
        let lam = Matrix::from_fn(6, 6, |i, j| if i == j { e.values[i] } else { 0.0 });
        let back = e
            .vectors
            .matmul(&lam)
            .unwrap()
            .matmul(&e.vectors.transpose())
            .unwrap();
        assert!(back.sub(&a).unwrap().max_abs() < 1e-12);
        let vtv = e.vectors.transpose().matmul(&e.vectors).unwrap();
        assert!(vtv.sub(&Matrix::identity(6)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn power_iteration_escapes_orthogonal_start() {
        // Dominant eigenvector (1,-1)/sqrt2 is orthogonal to the all-ones start.
        let g = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let r = dominant_eigenpair_psd(&g, &[1.0, 1.0], 1e-10, 1000).unwrap();
        assert_abs_diff_eq!(r.value, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.vector[0].abs(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn spectral_norm_of_indefinite_diagonal() {
        let a = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, -2.0]]).unwrap();
        let s = spectral_norm(&a, 1e-14, 0.0, 10_000).unwrap();
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn spectral_norm_of_rectangular() {
        // Singular values of [[3, 0], [4, 5]] are sqrt(45) and sqrt(5).
        let a = Matrix::from_rows(&[vec![3.0, 0.0], vec![4.0, 5.0]]).unwrap();
        let s = spectral_norm(&a, 1e-15, 0.0, 10_000).unwrap();
        assert_abs_diff_eq!(s, 45f64.sqrt(), epsilon = 1e-10);
        assert_eq!(spectral_norm(&Matrix::zeros(3, 2), 1e-12, 0.0, 10).unwrap(), 0.0);
    }

    #[test]
    fn pivoted_cholesky_detects_rank() {
        let b = Matrix::from_fn(3, 7, |i, j| (0.3 * (j as f64 + 1.0)).powi(i as i32));
        let w = b.transpose().matmul(&b).unwrap();
        let chol = pivoted_cholesky(&w, 1e-13 * w.max_abs()).unwrap();
        assert_eq!(chol.factor.cols(), 3);
        let back = chol.factor.gram_rows();
        assert!(back.sub(&w).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn pivoted_cholesky_flags_indefinite_remainder() {
        let w = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let chol = pivoted_cholesky(&w, 1e-12).unwrap();
        assert_eq!(chol.factor.cols(), 0);
        assert_eq!(chol.residual, 1.0);
    }
}
