//! Shared fixtures and independent oracles for the integration tests.
//!
//! Oracles use nalgebra's dense decompositions or brute force, never the
//! crate's own linear algebra.
#![allow(dead_code)]

pub mod plan;

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use simprune::linalg::Matrix;
use simprune::representatives::RepresentativeMatrix;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// `d x n` matrix with representative `l` in column `l`.
pub fn representatives_dmatrix(r: &RepresentativeMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(r.d(), r.n(), |i, j| r.column(j)[i])
}

/// Largest singular value from a dense SVD.
pub fn oracle_spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.singular_values().iter().fold(0.0_f64, |m, &s| m.max(s))
}

/// Flip so the largest-magnitude entry (lowest index on ties) is positive.
pub fn oracle_sign_canon(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Dominant left singular vector via the eigendecomposition of `M Mᵀ`.
pub fn oracle_representative(filter: &[f32], w: usize, h: usize, c: usize) -> Vec<f64> {
    // Filters are stored spatial-major: entry (spatial s, channel j) at s*c + j.
    let m = DMatrix::from_fn(w * h, c, |s, j| f64::from(filter[s * c + j]));
    let g = &m * m.transpose();
    let eig = SymmetricEigen::new(g);
    let top = eig.eigenvalues.imax();
    let mut v: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    oracle_sign_canon(&mut v);
    v
}

/// Number of eigenvalues of `RᵀR` above `rel` times the largest.
pub fn oracle_numerical_rank(r: &RepresentativeMatrix, rel: f64) -> usize {
    let rm = representatives_dmatrix(r);
    let s = rm.transpose() * &rm;
    let eig = SymmetricEigen::new(s);
    let top = eig.eigenvalues.max();
    eig.eigenvalues.iter().filter(|&&x| x > rel * top).count()
}

pub fn oracle_exact_similarity(r: &RepresentativeMatrix) -> DMatrix<f64> {
    let rm = representatives_dmatrix(r);
    rm.transpose() * rm
}

fn sum_of_distances(points: &[Vec<f64>], y: &[f64]) -> f64 {
    points
        .iter()
        .map(|p| {
            p.iter()
                .zip(y)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// Geometric median by exhaustive grid search over the bounding box,
/// repeatedly zooming into the best cell. Works for 1 to 3 dimensions.
pub fn oracle_geometric_median(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points[0].len();
    assert!((1..=3).contains(&dim), "grid oracle supports up to 3 dimensions");
    let mut lo: Vec<f64> = (0..dim)
        .map(|i| points.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min))
        .collect();
    let mut hi: Vec<f64> = (0..dim)
        .map(|i| points.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let steps = 40usize;
    let mut best = lo.clone();
    for _ in 0..40 {
        let mut best_cost = f64::INFINITY;
        let total = (steps + 1).pow(dim as u32);
        for idx in 0..total {
            let mut rem = idx;
            let y: Vec<f64> = (0..dim)
                .map(|i| {
                    let t = rem % (steps + 1);
                    rem /= steps + 1;
                    lo[i] + (hi[i] - lo[i]) * t as f64 / steps as f64
                })
                .collect();
            let cost = sum_of_distances(points, &y);
            if cost < best_cost {
                best_cost = cost;
                best = y;
            }
        }
        for i in 0..dim {
            let cell = (hi[i] - lo[i]) / steps as f64;
            // A wide window keeps the minimizer even when level sets are
            // elongated and the best grid point is several cells away.
            lo[i] = best[i] - 5.0 * cell;
            hi[i] = best[i] + 5.0 * cell;
        }
    }
    best
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    DVector::from_column_slice(a).metric_distance(&DVector::from_column_slice(b))
}
