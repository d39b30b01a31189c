//! Seeded synthetic layers and networks for tests, sweeps and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::norm2;
use crate::representatives::{canonicalize_sign, RepresentativeMatrix};
use crate::tensor_io::{FilterTensor, LayerEntry, LayerKind, NetworkManifest, WeightMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit_canonical(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n);
    canonicalize_sign(&mut v);
    v
}

/// `n` independent Gaussian directions in `d` dimensions.
pub fn random_representatives(d: usize, n: usize, seed: u64) -> Result<RepresentativeMatrix> {
    let mut rng = rng(seed);
    let cols = (0..n).map(|_| unit_canonical(gaussian(&mut rng, d))).collect();
    RepresentativeMatrix::from_columns(d, cols)
}

/// `n` unit directions drawn from a random `rank`-dimensional subspace of
/// `d` dimensions.
pub fn low_rank_representatives(
    d: usize,
    rank: usize,
    n: usize,
    seed: u64,
) -> Result<RepresentativeMatrix> {
    let mut rng = rng(seed);
    let basis: Vec<Vec<f64>> = (0..rank).map(|_| gaussian(&mut rng, d)).collect();
    let cols = (0..n)
        .map(|_| unit_canonical(combine(&basis, &gaussian(&mut rng, rank), d)))
        .collect();
    RepresentativeMatrix::from_columns(d, cols)
}

fn combine(basis: &[Vec<f64>], coeffs: &[f64], d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    for (b, &c) in basis.iter().zip(coeffs) {
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi += c * bi;
        }
    }
    v
}

/// A layer of rank-1 filters `a_l u_l v_lᵀ` whose spatial directions `u_l`
/// span a `rank`-dimensional subspace (`rank >= w*h` means unrestricted) and
/// whose amplitudes `a_l` lie in `[0.5, 2)`.
pub fn rank_structured_layer(
    name: &str,
    [n, w, h, c]: [usize; 4],
    rank: usize,
    seed: u64,
) -> Result<FilterTensor> {
    let d = w * h;
    let mut rng = rng(seed);
    let rank = rank.min(d);
    let basis: Vec<Vec<f64>> = (0..rank).map(|_| gaussian(&mut rng, d)).collect();
    let mut data = Vec::with_capacity(n * d * c);
    for _ in 0..n {
        let u = unit_canonical(combine(&basis, &gaussian(&mut rng, rank), d));
        let v = unit_canonical(gaussian(&mut rng, c));
        let amp = 0.5 + 1.5 * rng.random::<f64>();
        for ui in &u {
            for vj in &v {
                data.push((amp * ui * vj) as f32);
            }
        }
    }
    FilterTensor::new(name, [n, w, h, c], data)
}

/// Fully random Gaussian filters.
pub fn random_layer(name: &str, dims: [usize; 4], seed: u64) -> Result<FilterTensor> {
    let mut rng = rng(seed);
    let len = dims.iter().product();
    let data = gaussian(&mut rng, len).into_iter().map(|x| x as f32).collect();
    FilterTensor::new(name, dims, data)
}

/// Three 2x2 single-channel filters: filters 1 and 3 have large, nearly
/// equal l1 norms and nearly the same direction; filter 2 is small and
/// orthogonal to both.
pub fn duplicate_high_norm_layer() -> Result<FilterTensor> {
    let f1 = [2.0f32, 2.0, 0.0, 0.0];
    let f2 = [0.0f32, 0.0, 0.5, 0.5];
    let f3 = [2.05f32, 1.95, 0.0, 0.0];
    let data = [f1, f2, f3].concat();
    FilterTensor::new("F", [3, 2, 2, 1], data)
}

/// Layer ranks used by [`dcase_like_network`]: the column counts at which a
/// three-layer network of 16, 16 and 32 filters becomes exactly
/// reconstructible.
pub const DCASE_LIKE_RANKS: [usize; 3] = [9, 6, 13];

/// A network shaped like a three-conv acoustic-scene baseline (7x7 kernels,
/// 16/16/32 filters, a 40x500 log-mel input) with rank-structured weights.
pub fn dcase_like_network(seed: u64, ranks: [usize; 3]) -> Result<(WeightMap, NetworkManifest)> {
    let shapes = [
        ("C1", [16, 7, 7, 1]),
        ("C2", [16, 7, 7, 16]),
        ("C3", [32, 7, 7, 16]),
    ];
    let mut weights = WeightMap::new();
    for (i, (name, dims)) in shapes.into_iter().enumerate() {
        let layer = rank_structured_layer(name, dims, ranks[i], seed.wrapping_add(i as u64))?;
        weights.insert(name.to_string(), layer);
    }
    let pool = |name: &str, ch: usize| LayerEntry {
        name: name.into(),
        kind: LayerKind::Other,
        kernel: None,
        in_channels: ch,
        out_channels: ch,
        out_spatial: None,
        bias: false,
        channel_change: false,
    };
    let manifest = NetworkManifest::new(vec![
        LayerEntry::conv2d("C1", [7, 7], 1, 16, Some([40, 500])),
        LayerEntry::conv2d("C2", [7, 7], 16, 16, Some([40, 500])),
        pool("P1", 16),
        LayerEntry::conv2d("C3", [7, 7], 16, 32, Some([8, 100])),
        pool("P2", 32),
        LayerEntry::dense("D1", 64, 100).with_bias(true),
        LayerEntry::dense("D2", 100, 10).with_bias(true),
    ])?;
    Ok((weights, manifest))
}

/// A single 3x3 layer with `n` filters over `c` channels, VGG style.
pub fn vgg_like_layer(name: &str, n: usize, c: usize, seed: u64) -> Result<FilterTensor> {
    rank_structured_layer(name, [n, 3, 3, c], 9, seed)
}
