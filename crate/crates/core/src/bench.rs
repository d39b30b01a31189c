//! Approximation-error sweeps and pruning-time measurements.

use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{PruneError, Result};
use crate::fsutil::write_atomic;
use crate::nystrom::{approximation_error, exact_similarity, to_distance, ErrorNorm, NystromModel};
use crate::pipeline::{select_layer, SimilarityMethod};
use crate::representatives::{build_representative_matrix, RepresentativeMatrix};
use crate::selection::{select_by_similarity, GreedyMode, SelectionMethod};
use crate::tensor_io::FilterTensor;

pub const DEFAULT_REPETITIONS: usize = 1000;
pub const WARMUP_RUNS: usize = 5;

/// One point of an approximation-error sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub layer: String,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub delta: f64,
    pub selection_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub layer: String,
    pub n: usize,
    pub d: usize,
    pub method: String,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub repetitions: usize,
    pub total_s: f64,
    pub mean_s: f64,
}

pub trait CsvRow: Serialize {
    const HEADER: &'static [&'static str];
}

impl CsvRow for SweepRecord {
    const HEADER: &'static [&'static str] = &["layer", "n", "d", "m", "k", "delta", "selection_match"];
}

impl CsvRow for TimingRecord {
    const HEADER: &'static [&'static str] = &[
        "layer",
        "n",
        "d",
        "method",
        "m",
        "k",
        "repetitions",
        "total_s",
        "mean_s",
    ];
}

/// Which `(m, k)` points a sweep visits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SweepMode {
    /// `k = m` for every `m` in the grid.
    RankEqualsColumns { m_grid: Vec<usize> },
    /// Fixed `m`, every `k` in the grid.
    FixedColumns { m: usize, k_grid: Vec<usize> },
}

impl SweepMode {
    /// `m = 1..=n` with `k = m`.
    pub fn all_columns(n: usize) -> Self {
        SweepMode::RankEqualsColumns {
            m_grid: (1..=n).collect(),
        }
    }

    /// `k = 1..=m` at fixed `m`.
    pub fn all_ranks(m: usize) -> Self {
        SweepMode::FixedColumns {
            m,
            k_grid: (1..=m).collect(),
        }
    }
}

/// Approximation error and selection agreement at each sweep point.
pub fn sweep_delta(
    layer: &str,
    r: &RepresentativeMatrix,
    mode: &SweepMode,
    norm: ErrorNorm,
    greedy: GreedyMode,
) -> Result<Vec<SweepRecord>> {
    let exact = to_distance(&exact_similarity(r));
    let reference = select_by_similarity(&exact, SelectionMethod::SimilarityExact, greedy)?;
    let reference_keep = reference.keep_set();
    let (n, d) = (r.n(), r.d());

    let point = |model: &NystromModel, m: usize, k: usize| -> Result<SweepRecord> {
        let approx = to_distance(&model.similarity(k)?);
        let delta = approximation_error(&exact, &approx, norm)?;
        let outcome = select_by_similarity(
            &approx,
            SelectionMethod::SimilarityNystrom { m, k },
            greedy,
        )?;
        Ok(SweepRecord {
            layer: layer.to_string(),
            n,
            d,
            m,
            k,
            delta,
            selection_match: outcome.keep_set() == reference_keep,
        })
    };

    let check_m = |m: usize| -> Result<()> {
        if m == 0 || m > n {
            return Err(PruneError::InvalidArgument(format!(
                "sweep column count {m} outside 1..={n}"
            )));
        }
        Ok(())
    };

    match mode {
        SweepMode::RankEqualsColumns { m_grid } => m_grid
            .iter()
            .map(|&m| {
                check_m(m)?;
                let model = NystromModel::fit(r, m, Default::default())?;
                point(&model, m, m)
            })
            .collect(),
        SweepMode::FixedColumns { m, k_grid } => {
            check_m(*m)?;
            let model = NystromModel::fit(r, *m, Default::default())?;
            k_grid.iter().map(|&k| point(&model, *m, k)).collect()
        }
    }
}

/// Time the similarity, distance and selection steps on precomputed
/// representatives. A few untimed warm-up runs precede the measurement.
pub fn time_pipeline(
    layer: &str,
    r: &RepresentativeMatrix,
    method: &SimilarityMethod,
    repetitions: usize,
) -> Result<TimingRecord> {
    if repetitions == 0 {
        return Err(PruneError::InvalidArgument(
            "repetitions must be at least 1".into(),
        ));
    }
    for _ in 0..WARMUP_RUNS {
        black_box(select_layer(r, method, GreedyMode::Verbatim)?);
    }
    let start = Instant::now();
    for _ in 0..repetitions {
        black_box(select_layer(black_box(r), method, GreedyMode::Verbatim)?);
    }
    let total_s = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    let (label, m, k) = match *method {
        SimilarityMethod::Exact => ("exact", None, None),
        SimilarityMethod::Nystrom { m, k, .. } => ("nystrom", Some(m), Some(k)),
    };
    Ok(TimingRecord {
        layer: layer.to_string(),
        n: r.n(),
        d: r.d(),
        method: label.to_string(),
        m,
        k,
        repetitions,
        total_s,
        mean_s: total_s / repetitions as f64,
    })
}

/// [`time_pipeline`] on a raw layer; representative extraction is not timed.
pub fn time_pruning(
    layer: &FilterTensor,
    method: &SimilarityMethod,
    repetitions: usize,
) -> Result<TimingRecord> {
    let r = build_representative_matrix(layer)?;
    time_pipeline(layer.name(), &r, method, repetitions)
}

/// Mean exact time over mean Nyström time.
pub fn speedup(exact: &TimingRecord, nystrom: &TimingRecord) -> f64 {
    exact.mean_s / nystrom.mean_s
}

pub fn csv_string<T: CsvRow>(records: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(T::HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| PruneError::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn emit_csv<T: CsvRow>(records: &[T], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), csv_string(records)?.as_bytes())
}

pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<_, _>>()?)
}
