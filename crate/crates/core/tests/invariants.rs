mod common;

use proptest::prelude::*;
use simprune::nystrom::{
    approximation_error, exact_similarity, to_distance, ColumnSelection, DistanceMatrix,
    ErrorNorm, NystromModel,
};
use simprune::pipeline::{select_layer, SimilarityMethod};
use simprune::representatives::build_representative_matrix;
use simprune::selection::{closest_pairs, greedy_select, GreedyMode, SelectionMethod};
use simprune::synth::{
    dcase_like_network, duplicate_high_norm_layer, low_rank_representatives,
    random_layer, random_representatives, vgg_like_layer, DCASE_LIKE_RANKS,
};
use simprune::tensor_io::{encode_weights, read_weights, FilterTensor, WeightMap};

const FIXTURE_SEED: u64 = 7;

fn spectral(a: &DistanceMatrix, b: &DistanceMatrix) -> f64 {
    approximation_error(a, b, ErrorNorm::Spectral).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scaling_filters_does_not_change_selection(
        seed in 0u64..1000,
        scales in prop::collection::vec(prop_oneof![0.01f32..100.0, -100.0f32..-0.01], 10),
    ) {
        let layer = random_layer("L", [10, 3, 3, 4], seed).unwrap();
        let data: Vec<f32> = layer
            .filters()
            .zip(&scales)
            .flat_map(|(f, &s)| f.iter().map(move |x| x * s))
            .collect();
        let scaled = FilterTensor::new("L", layer.dims(), data).unwrap();
        let r1 = build_representative_matrix(&layer).unwrap();
        let r2 = build_representative_matrix(&scaled).unwrap();
        for l in 0..10 {
            for (a, b) in r1.column(l).iter().zip(r2.column(l)) {
                prop_assert!((a - b).abs() < 1e-5);
            }
        }
        let a = select_layer(&r1, &SimilarityMethod::Exact, GreedyMode::Verbatim).unwrap();
        let b = select_layer(&r2, &SimilarityMethod::Exact, GreedyMode::Verbatim).unwrap();
        prop_assert_eq!(a.keep_set(), b.keep_set());
    }

    #[test]
    fn error_does_not_grow_with_rank(
        seed in 0u64..1000,
        d in 3usize..20,
        n in 4usize..40,
        frac in 0.2f64..1.0,
        random_cols in any::<bool>(),
    ) {
        let r = random_representatives(d, n, seed).unwrap();
        let m = ((n as f64 * frac) as usize).clamp(1, n);
        let selection = if random_cols {
            ColumnSelection::Random { seed }
        } else {
            ColumnSelection::First
        };
        let model = NystromModel::fit(&r, m, selection).unwrap();
        let exact = to_distance(&exact_similarity(&r));
        for norm in [ErrorNorm::Spectral, ErrorNorm::Frobenius] {
            let mut prev = f64::INFINITY;
            for k in 1..=model.eigenvalues().len().min(m) {
                let approx = to_distance(&model.similarity(k).unwrap());
                let delta = approximation_error(&exact, &approx, norm).unwrap();
                prop_assert!(delta <= prev + 1e-9, "k={} {} > {}", k, delta, prev);
                prev = delta;
            }
        }
    }

    #[test]
    fn similarity_matrices_are_symmetric(seed in 0u64..1000, d in 2usize..12, n in 2usize..30) {
        let r = random_representatives(d, n, seed).unwrap();
        let exact = exact_similarity(&r);
        prop_assert!(exact.values.asymmetry() < 1e-12);
        for i in 0..n {
            prop_assert!((exact.values[(i, i)] - 1.0).abs() < 1e-9);
        }
        let m = n.div_ceil(2);
        let approx = NystromModel::fit(&r, m, ColumnSelection::First)
            .unwrap()
            .similarity(m)
            .unwrap();
        prop_assert!(approx.values.asymmetry() < 1e-12);
    }

    #[test]
    fn greedy_outcome_structure(seed in 0u64..1000, d in 2usize..10, n in 2usize..40) {
        let r = random_representatives(d, n, seed).unwrap();
        let z = to_distance(&exact_similarity(&r));
        let pairs = closest_pairs(&z).unwrap();
        prop_assert_eq!(pairs.len(), n);
        for mode in [GreedyMode::Verbatim, GreedyMode::Strict] {
            let out = greedy_select(&pairs, SelectionMethod::SimilarityExact, mode);
            let mut imp = out.important.clone();
            imp.sort_unstable();
            imp.dedup();
            prop_assert_eq!(imp.len(), out.important.len());
            let mut red = out.redundant.clone();
            red.sort_unstable();
            red.dedup();
            prop_assert_eq!(red.len(), out.redundant.len());
            prop_assert!(!out.important.is_empty());
            for w in out.pairs.windows(2) {
                prop_assert!(w[0].distance <= w[1].distance + simprune::selection::TIE_GRID);
            }
            if mode == GreedyMode::Strict {
                prop_assert!(out.important.iter().all(|i| !out.redundant.contains(i)));
            }
        }
    }

    #[test]
    fn low_rank_nystrom_is_exact_at_rank(seed in 0u64..1000, rank in 1usize..6, n in 8usize..30) {
        let r = low_rank_representatives(12, rank, n, seed).unwrap();
        let exact = to_distance(&exact_similarity(&r));
        let model = NystromModel::fit(&r, n, ColumnSelection::First).unwrap();
        let approx = to_distance(&model.similarity(rank).unwrap());
        prop_assert!(spectral(&exact, &approx) < 1e-6);
    }
}

fn single(layer: FilterTensor) -> WeightMap {
    let mut map = WeightMap::new();
    map.insert(layer.name().to_string(), layer);
    map
}

#[test]
fn checked_in_fixtures_match_generators() {
    let (net, _) = dcase_like_network(FIXTURE_SEED, DCASE_LIKE_RANKS).unwrap();
    let dup = single(duplicate_high_norm_layer().unwrap());
    let vgg = single(vgg_like_layer("V", 512, 8, FIXTURE_SEED).unwrap());
    for (map, file) in [
        (net, "dcase_like.nwtf"),
        (dup, "duplicate_high_norm.nwtf"),
        (vgg, "vgg_like_512.nwtf"),
    ] {
        let on_disk = std::fs::read(common::fixture(file)).unwrap();
        assert_eq!(encode_weights(&map).unwrap(), on_disk, "{file}");
    }
}

#[test]
fn vgg_fixture_has_rank_at_most_nine() {
    let weights = read_weights(common::fixture("vgg_like_512.nwtf")).unwrap();
    let r = build_representative_matrix(&weights["V"]).unwrap();
    assert_eq!(r.d(), 9);
    assert!(common::oracle_numerical_rank(&r, 1e-10) <= 9);
}
