//! Command-line front end: `prune`, `sweep`, `bench` and `plan`.
//!
//! Exit codes: 0 success, 1 computation error, 2 usage or I/O error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::{
    csv_string, speedup, sweep_delta, time_pipeline, SweepMode, SweepRecord, TimingRecord,
    DEFAULT_REPETITIONS,
};
use crate::error::{PruneError, Result};
use crate::fsutil::write_atomic;
use crate::nystrom::{
    approximation_error, exact_similarity, to_distance, ColumnSelection, ErrorNorm,
};
use crate::pipeline::{auto_mk, select_layer, similarity, SimilarityMethod};
use crate::prune_plan::{build_plan, plan_to_json, PrunePlan};
use crate::representatives::{build_representative_matrix, RepresentativeMatrix};
use crate::selection::{
    baseline_outcome, gm_ranking, l1_ranking, select_by_similarity, GmMode, GreedyMode,
    SelectionMethod, SelectionOutcome,
};
use crate::tensor_io::{read_manifest, read_weights, FilterTensor, NetworkManifest, WeightMap};

pub const SELECTION_FILE: &str = "selection.json";
pub const PLAN_FILE: &str = "plan.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const DEFAULT_DELTA_THRESHOLD: f64 = 1.0;

#[derive(Debug, Parser)]
#[command(name = "simprune", version, about = "Similarity-based passive filter pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select important filters per conv layer; writes selection.json (and
    /// plan.json when a manifest is given).
    Prune(CommonArgs),
    /// Approximation error over column counts (k = m) or, with --m, over
    /// ranks at a fixed column count; writes sweep.csv.
    Sweep(CommonArgs),
    /// Time exact vs Nystrom selection per layer; writes timing.csv.
    Bench(CommonArgs),
    /// Build a prune plan from a manifest and either a previous
    /// selection.json (--selection) or a fresh selection; writes plan.json.
    Plan(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    SimilarityExact,
    SimilarityNystrom,
    L1,
    Gm,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "similarity-nystrom")]
    method: MethodArg,
    /// Column counts, one per conv layer (or one for all layers).
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    /// Ranks, one per conv layer (or one for all layers).
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Pick (m, k) per layer by the delta-threshold search.
    #[arg(long)]
    auto: bool,
    #[arg(long, default_value_t = DEFAULT_DELTA_THRESHOLD)]
    delta_threshold: f64,
    /// Filters to keep per layer for the l1 and gm baselines.
    #[arg(long, value_delimiter = ',')]
    keep_counts: Option<Vec<usize>>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    reps: usize,
    /// Previous selection.json to plan from (plan only).
    #[arg(long)]
    selection: Option<PathBuf>,
    #[arg(long)]
    strict_greedy: bool,
    #[arg(long)]
    frobenius_delta: bool,
    #[arg(long)]
    random_columns: bool,
    #[arg(long)]
    gm_surrogate: bool,
}

/// How the Nystrom column count and rank are chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MkSpec {
    /// Per-layer values (a single value applies to every layer).
    Explicit { m: Vec<usize>, k: Vec<usize> },
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub weights: PathBuf,
    pub manifest: Option<PathBuf>,
    pub method: MethodArg,
    pub mk: MkSpec,
    /// Fixed column counts for the rank sweep (`sweep --m`).
    pub sweep_m: Option<Vec<usize>>,
    pub delta_threshold: f64,
    pub keep_counts: Option<Vec<usize>>,
    pub out: PathBuf,
    pub seed: u64,
    pub reps: usize,
    pub selection: Option<PathBuf>,
    pub strict_greedy: bool,
    pub frobenius_delta: bool,
    pub random_columns: bool,
    pub gm_surrogate: bool,
}

impl RunConfig {
    pub fn new(weights: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            weights: weights.into(),
            manifest: None,
            method: MethodArg::SimilarityNystrom,
            mk: MkSpec::Auto,
            sweep_m: None,
            delta_threshold: DEFAULT_DELTA_THRESHOLD,
            keep_counts: None,
            out: out.into(),
            seed: 0,
            reps: DEFAULT_REPETITIONS,
            selection: None,
            strict_greedy: false,
            frobenius_delta: false,
            random_columns: false,
            gm_surrogate: false,
        }
    }

    fn from_args(args: CommonArgs) -> Result<Self> {
        if !(args.delta_threshold > 0.0) {
            return Err(PruneError::InvalidArgument(format!(
                "--delta-threshold must be positive, got {}",
                args.delta_threshold
            )));
        }
        if args.reps == 0 {
            return Err(PruneError::InvalidArgument("--reps must be at least 1".into()));
        }
        let sweep_m = args.m.clone();
        let mk = match (args.auto, args.m, args.k) {
            (true, None, None) => MkSpec::Auto,
            (true, _, _) => {
                return Err(PruneError::InvalidArgument(
                    "--auto cannot be combined with --m/--k".into(),
                ))
            }
            (false, Some(m), Some(k)) => MkSpec::Explicit { m, k },
            (false, Some(m), None) => MkSpec::Explicit { k: m.clone(), m },
            (false, None, Some(_)) => {
                return Err(PruneError::InvalidArgument("--k requires --m".into()))
            }
            (false, None, None) => MkSpec::Auto,
        };
        Ok(RunConfig {
            weights: args.weights,
            manifest: args.manifest,
            method: args.method,
            mk,
            sweep_m,
            delta_threshold: args.delta_threshold,
            keep_counts: args.keep_counts,
            out: args.out,
            seed: args.seed,
            reps: args.reps,
            selection: args.selection,
            strict_greedy: args.strict_greedy,
            frobenius_delta: args.frobenius_delta,
            random_columns: args.random_columns,
            gm_surrogate: args.gm_surrogate,
        })
    }

    fn greedy(&self) -> GreedyMode {
        if self.strict_greedy {
            GreedyMode::Strict
        } else {
            GreedyMode::Verbatim
        }
    }

    fn norm(&self) -> ErrorNorm {
        if self.frobenius_delta {
            ErrorNorm::Frobenius
        } else {
            ErrorNorm::Spectral
        }
    }

    fn columns(&self, layer_index: usize) -> ColumnSelection {
        if self.random_columns {
            ColumnSelection::Random {
                seed: self.seed.wrapping_add(layer_index as u64),
            }
        } else {
            ColumnSelection::First
        }
    }
}

/// Per-layer selection result as written to selection.json (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub layer: String,
    pub method: String,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub delta: Option<f64>,
    /// "auto" when (m, k) came from the threshold search, "explicit" when
    /// given on the command line.
    pub mk_source: Option<String>,
    pub important: Vec<usize>,
    pub redundant: Vec<usize>,
    pub pairs: Vec<(usize, usize, f64)>,
    pub index_base: u8,
}

impl OutcomeRecord {
    fn new(
        layer: &str,
        outcome: &SelectionOutcome,
        delta: Option<f64>,
        mk_source: Option<&str>,
    ) -> Self {
        let (m, k) = match outcome.method {
            SelectionMethod::SimilarityNystrom { m, k } => (Some(m), Some(k)),
            _ => (None, None),
        };
        let one = |v: &[usize]| v.iter().map(|i| i + 1).collect();
        OutcomeRecord {
            layer: layer.to_string(),
            method: outcome.method.label().to_string(),
            m,
            k,
            delta,
            mk_source: mk_source.map(str::to_string),
            important: one(&outcome.important),
            redundant: one(&outcome.redundant),
            pairs: outcome
                .pairs
                .iter()
                .map(|p| (p.source + 1, p.target + 1, p.distance))
                .collect(),
            index_base: 1,
        }
    }

    /// Kept filters, 0-based ascending.
    pub fn keep_set(&self) -> Vec<usize> {
        let mut keep: Vec<usize> = self.important.iter().map(|i| i - 1).collect();
        keep.sort_unstable();
        keep
    }
}

#[derive(Debug, Clone)]
pub struct PruneReport {
    pub outcomes: Vec<OutcomeRecord>,
    pub plan: Option<PrunePlan>,
}

fn per_layer(values: &[usize], layers: usize, flag: &str) -> Result<Vec<usize>> {
    match values.len() {
        1 => Ok(vec![values[0]; layers]),
        len if len == layers => Ok(values.to_vec()),
        len => Err(PruneError::InvalidArgument(format!(
            "{flag} has {len} values for {layers} layers"
        ))),
    }
}

fn load_weights(config: &RunConfig) -> Result<WeightMap> {
    let weights = read_weights(&config.weights)?;
    if weights.is_empty() {
        return Err(PruneError::InvalidArgument(format!(
            "{}: no tensors to process",
            config.weights.display()
        )));
    }
    Ok(weights)
}

fn load_manifest(config: &RunConfig, weights: &WeightMap) -> Result<Option<NetworkManifest>> {
    let Some(path) = &config.manifest else {
        return Ok(None);
    };
    let manifest = read_manifest(path)?;
    for layer in manifest.conv_layers() {
        let tensor = weights.get(&layer.name).ok_or_else(|| {
            PruneError::Manifest(format!(
                "conv layer '{}' has no tensor in {}",
                layer.name,
                config.weights.display()
            ))
        })?;
        let kernel = layer.kernel.expect("validated manifest");
        let expected = [layer.out_channels, kernel[0], kernel[1], layer.in_channels];
        if tensor.dims() != expected {
            return Err(PruneError::Manifest(format!(
                "layer '{}': tensor dims {:?} disagree with manifest {:?}",
                layer.name,
                tensor.dims(),
                expected
            )));
        }
    }
    Ok(Some(manifest))
}

struct LayerSelection {
    record: OutcomeRecord,
}

fn select_one(
    config: &RunConfig,
    index: usize,
    layer: &FilterTensor,
    nystrom_mk: Option<(usize, usize)>,
    keep_count: Option<usize>,
) -> Result<LayerSelection> {
    let greedy = config.greedy();
    let record = match config.method {
        MethodArg::L1 | MethodArg::Gm => {
            let count = match keep_count {
                Some(c) => c,
                None => {
                    // Match the cardinality of the exact similarity selection.
                    let r = build_representative_matrix(layer)?;
                    select_layer(&r, &SimilarityMethod::Exact, greedy)?
                        .important
                        .len()
                }
            };
            let (ranking, method) = if config.method == MethodArg::L1 {
                (l1_ranking(layer), SelectionMethod::L1)
            } else {
                let mode = if config.gm_surrogate {
                    GmMode::Surrogate
                } else {
                    GmMode::Weiszfeld
                };
                (gm_ranking(layer, mode)?, SelectionMethod::Gm)
            };
            let outcome = baseline_outcome(&ranking, count, method)?;
            OutcomeRecord::new(layer.name(), &outcome, None, None)
        }
        MethodArg::SimilarityExact => {
            let r = build_representative_matrix(layer)?;
            let outcome = select_layer(&r, &SimilarityMethod::Exact, greedy)?;
            OutcomeRecord::new(layer.name(), &outcome, None, None)
        }
        MethodArg::SimilarityNystrom => {
            let r = build_representative_matrix(layer)?;
            let exact = to_distance(&exact_similarity(&r));
            let columns = config.columns(index);
            let (m, k, source) = match nystrom_mk {
                Some((m, k)) => (m, k, "explicit"),
                None => {
                    let choice =
                        auto_mk(&r, &exact, config.delta_threshold, config.norm(), columns)?;
                    (choice.m, choice.k, "auto")
                }
            };
            let method = SimilarityMethod::Nystrom {
                m,
                k,
                selection: columns,
            };
            let approx = to_distance(&similarity(&r, &method)?);
            let delta = approximation_error(&exact, &approx, config.norm())?;
            let outcome =
                select_by_similarity(&approx, method.selection_method(), greedy)?;
            OutcomeRecord::new(layer.name(), &outcome, Some(delta), Some(source))
        }
    };
    Ok(LayerSelection { record })
}

fn select_all(config: &RunConfig, weights: &WeightMap) -> Result<Vec<OutcomeRecord>> {
    let layers: Vec<&FilterTensor> = weights.values().collect();
    let count = layers.len();
    let mk: Vec<Option<(usize, usize)>> = match (&config.mk, config.method) {
        (MkSpec::Explicit { m, k }, MethodArg::SimilarityNystrom) => {
            let m = per_layer(m, count, "--m")?;
            let k = per_layer(k, count, "--k")?;
            m.into_iter().zip(k).map(Some).collect()
        }
        _ => vec![None; count],
    };
    let keep_counts: Vec<Option<usize>> = match &config.keep_counts {
        Some(c) => per_layer(c, count, "--keep-counts")?
            .into_iter()
            .map(Some)
            .collect(),
        None => vec![None; count],
    };
    layers
        .par_iter()
        .enumerate()
        .map(|(i, layer)| {
            select_one(config, i, layer, mk[i], keep_counts[i])
                .map(|s| s.record)
                .map_err(|e| e.in_layer(layer.name()))
        })
        .collect()
}

fn keeps_from(outcomes: &[OutcomeRecord]) -> HashMap<String, Vec<usize>> {
    outcomes
        .iter()
        .map(|o| (o.layer.clone(), o.keep_set()))
        .collect()
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PruneError::io(dir, e))
}

pub fn selection_to_json(outcomes: &[OutcomeRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(outcomes)? + "\n")
}

pub fn read_selection(path: impl AsRef<Path>) -> Result<Vec<OutcomeRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PruneError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Only layers that the manifest lists as conv layers get a keep set.
fn plan_keeps(manifest: &NetworkManifest, outcomes: &[OutcomeRecord]) -> HashMap<String, Vec<usize>> {
    let mut keeps = keeps_from(outcomes);
    keeps.retain(|name, _| manifest.conv_layers().any(|l| &l.name == name));
    keeps
}

pub fn cmd_prune(config: &RunConfig) -> Result<PruneReport> {
    let weights = load_weights(config)?;
    let manifest = load_manifest(config, &weights)?;
    let outcomes = select_all(config, &weights)?;
    ensure_out_dir(&config.out)?;
    write_atomic(
        &config.out.join(SELECTION_FILE),
        selection_to_json(&outcomes)?.as_bytes(),
    )?;
    let plan = match &manifest {
        Some(manifest) => {
            let plan = build_plan(manifest, &plan_keeps(manifest, &outcomes))?;
            write_atomic(&config.out.join(PLAN_FILE), plan_to_json(&plan)?.as_bytes())?;
            Some(plan)
        }
        None => None,
    };
    Ok(PruneReport { outcomes, plan })
}

pub fn cmd_plan(config: &RunConfig) -> Result<PrunePlan> {
    let weights = load_weights(config)?;
    let Some(manifest) = load_manifest(config, &weights)? else {
        return Err(PruneError::InvalidArgument("plan requires --manifest".into()));
    };
    let outcomes = match &config.selection {
        Some(path) => read_selection(path)?,
        None => select_all(config, &weights)?,
    };
    let plan = build_plan(&manifest, &plan_keeps(&manifest, &outcomes))?;
    ensure_out_dir(&config.out)?;
    write_atomic(&config.out.join(PLAN_FILE), plan_to_json(&plan)?.as_bytes())?;
    Ok(plan)
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    /// Threshold-search result per layer, when one exists.
    pub auto: Vec<(String, Option<(usize, usize, f64)>)>,
}

pub fn cmd_sweep(config: &RunConfig) -> Result<SweepReport> {
    let weights = load_weights(config)?;
    let count = weights.len();
    let fixed_m = match &config.sweep_m {
        Some(m) => per_layer(m, count, "--m")?.into_iter().map(Some).collect(),
        None => vec![None; count],
    };
    let layers: Vec<&FilterTensor> = weights.values().collect();
    let per_layer_out: Vec<(Vec<SweepRecord>, Option<(usize, usize, f64)>)> = layers
        .par_iter()
        .enumerate()
        .map(|(i, layer)| {
            let run = || -> Result<_> {
                let r = build_representative_matrix(layer)?;
                let mode = match fixed_m[i] {
                    Some(m) => SweepMode::all_ranks(m),
                    None => SweepMode::all_columns(r.n()),
                };
                let records = sweep_delta(layer.name(), &r, &mode, config.norm(), config.greedy())?;
                let exact = to_distance(&exact_similarity(&r));
                let auto = auto_mk(
                    &r,
                    &exact,
                    config.delta_threshold,
                    config.norm(),
                    ColumnSelection::First,
                )
                .ok()
                .map(|c| (c.m, c.k, c.delta));
                Ok((records, auto))
            };
            run().map_err(|e: PruneError| e.in_layer(layer.name()))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut auto = Vec::new();
    for (layer, (recs, choice)) in layers.iter().zip(per_layer_out) {
        records.extend(recs);
        auto.push((layer.name().to_string(), choice));
    }
    ensure_out_dir(&config.out)?;
    write_atomic(&config.out.join(SWEEP_FILE), csv_string(&records)?.as_bytes())?;
    Ok(SweepReport { records, auto })
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub records: Vec<TimingRecord>,
    /// `(layer, exact mean / nystrom mean)`.
    pub speedups: Vec<(String, f64)>,
}

pub fn cmd_bench(config: &RunConfig) -> Result<BenchReport> {
    let weights = load_weights(config)?;
    let count = weights.len();
    let explicit: Vec<Option<(usize, usize)>> = match &config.mk {
        MkSpec::Explicit { m, k } => {
            let m = per_layer(m, count, "--m")?;
            let k = per_layer(k, count, "--k")?;
            m.into_iter().zip(k).map(Some).collect()
        }
        MkSpec::Auto => vec![None; count],
    };

    // Timed sections run one layer at a time.
    let mut records = Vec::new();
    let mut speedups = Vec::new();
    for (i, layer) in weights.values().enumerate() {
        let run = || -> Result<(TimingRecord, TimingRecord)> {
            let r: RepresentativeMatrix = build_representative_matrix(layer)?;
            let columns = config.columns(i);
            let (m, k) = match explicit[i] {
                Some(mk) => mk,
                None => {
                    let exact = to_distance(&exact_similarity(&r));
                    let c = auto_mk(&r, &exact, config.delta_threshold, config.norm(), columns)?;
                    (c.m, c.k)
                }
            };
            let exact = time_pipeline(layer.name(), &r, &SimilarityMethod::Exact, config.reps)?;
            let nystrom = time_pipeline(
                layer.name(),
                &r,
                &SimilarityMethod::Nystrom {
                    m,
                    k,
                    selection: columns,
                },
                config.reps,
            )?;
            Ok((exact, nystrom))
        };
        let (exact, nystrom) = run().map_err(|e| e.in_layer(layer.name()))?;
        speedups.push((layer.name().to_string(), speedup(&exact, &nystrom)));
        records.push(exact);
        records.push(nystrom);
    }
    ensure_out_dir(&config.out)?;
    write_atomic(&config.out.join(TIMING_FILE), csv_string(&records)?.as_bytes())?;
    Ok(BenchReport { records, speedups })
}

fn exit_code(err: &PruneError) -> i32 {
    if err.is_input_error() {
        2
    } else {
        1
    }
}

/// Parse `args` (including the program name), run the subcommand and return
/// the process exit code. Summaries go to stdout, diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, args) = match cli.command {
        Command::Prune(a) => ("prune", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Bench(a) => ("bench", a),
        Command::Plan(a) => ("plan", a),
    };
    let result = RunConfig::from_args(args).and_then(|config| {
        let mut summary = String::new();
        match name {
            "prune" => {
                let report = cmd_prune(&config)?;
                for o in &report.outcomes {
                    let mk = match (o.m, o.k, &o.mk_source) {
                        (Some(m), Some(k), Some(src)) => {
                            format!(" m={m} k={k} ({src}) delta={:.3e}", o.delta.unwrap_or(0.0))
                        }
                        _ => String::new(),
                    };
                    let _ = writeln!(
                        summary,
                        "{}: {} kept {} filters{mk}",
                        o.layer,
                        o.method,
                        o.important.len()
                    );
                }
                if let Some(plan) = &report.plan {
                    let _ = writeln!(
                        summary,
                        "MACs {} -> {}, params {} -> {}",
                        plan.totals.macs_before,
                        plan.totals.macs_after,
                        plan.totals.params_before,
                        plan.totals.params_after
                    );
                }
            }
            "sweep" => {
                let report = cmd_sweep(&config)?;
                let _ = writeln!(summary, "{} sweep records", report.records.len());
                for (layer, choice) in &report.auto {
                    match choice {
                        Some((m, k, d)) => {
                            let _ = writeln!(
                                summary,
                                "{layer}: delta < {} first at m={m} k={k} (auto search, delta={d:.3e})",
                                config.delta_threshold
                            );
                        }
                        None => {
                            let _ = writeln!(
                                summary,
                                "{layer}: no (m, k) reaches delta < {}",
                                config.delta_threshold
                            );
                        }
                    }
                }
            }
            "bench" => {
                let report = cmd_bench(&config)?;
                for pair in report.records.chunks(2) {
                    let (e, n) = (&pair[0], &pair[1]);
                    let _ = writeln!(
                        summary,
                        "{}: n={} d={} exact {:.3e}s nystrom(m={},k={}) {:.3e}s speedup {:.2}x",
                        e.layer,
                        e.n,
                        e.d,
                        e.mean_s,
                        n.m.unwrap_or(0),
                        n.k.unwrap_or(0),
                        n.mean_s,
                        speedup(e, n)
                    );
                }
            }
            _ => {
                let plan = cmd_plan(&config)?;
                let _ = writeln!(
                    summary,
                    "MACs {} -> {}, params {} -> {}",
                    plan.totals.macs_before,
                    plan.totals.macs_after,
                    plan.totals.params_before,
                    plan.totals.params_after
                );
            }
        }
        Ok(summary)
    });
    match result {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("simprune {name}: {e}");
            exit_code(&e)
        }
    }
}
