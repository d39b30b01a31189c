//! Regenerate the checked-in test fixtures under `tests/fixtures/`.
//!
//! `cargo run --example make_fixtures`

use std::path::Path;

use anyhow::Result;
use simprune::synth::{dcase_like_network, duplicate_high_norm_layer, vgg_like_layer, DCASE_LIKE_RANKS};
use simprune::tensor_io::{write_manifest, write_weights, FilterTensor, WeightMap};

pub const FIXTURE_SEED: u64 = 7;

fn single(layer: FilterTensor) -> WeightMap {
    let mut map = WeightMap::new();
    map.insert(layer.name().to_string(), layer);
    map
}

fn main() -> Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir)?;

    let (weights, manifest) = dcase_like_network(FIXTURE_SEED, DCASE_LIKE_RANKS)?;
    write_weights(&weights, dir.join("dcase_like.nwtf"))?;
    write_manifest(&manifest, dir.join("dcase_like.json"))?;

    write_weights(&single(duplicate_high_norm_layer()?), dir.join("duplicate_high_norm.nwtf"))?;

    let h = std::f32::consts::FRAC_1_SQRT_2;
    let toy = FilterTensor::new("T", [4, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0, h, h, 1.0, 0.0])?;
    write_weights(&single(toy), dir.join("toy4.nwtf"))?;

    write_weights(&single(vgg_like_layer("V", 512, 8, FIXTURE_SEED)?), dir.join("vgg_like_512.nwtf"))?;
    println!("fixtures written to {}", dir.display());
    Ok(())
}
