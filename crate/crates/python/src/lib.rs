//! Python bindings: weights I/O, representatives, similarity, selection,
//! prune plans and the CLI entry point.
//!
//! Filter indices are 0-based on the Python side; the JSON files written by
//! the CLI stay 1-based.

use std::collections::HashMap;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use simprune::nystrom::{
    approximation_error as core_error, exact_similarity as core_exact, to_distance,
    ColumnSelection, ErrorNorm, NystromModel,
};
use simprune::pipeline::{auto_mk as core_auto_mk, select_layer, SimilarityMethod};
use simprune::prune_plan::{build_plan, plan_to_json};
use simprune::representatives::{build_representative_matrix, numerical_rank as core_rank};
use simprune::selection::{
    baseline_outcome, gm_ranking as core_gm_ranking, l1_ranking as core_l1_ranking, GmMode,
    GreedyMode, SelectionMethod, SelectionOutcome as CoreOutcome,
};
use simprune::tensor_io::{
    parse_manifest, read_weights as core_read, write_weights as core_write, WeightMap,
};
use simprune::PruneError;

fn to_py(err: PruneError) -> PyErr {
    let msg = err.to_string();
    match err {
        PruneError::Io { .. } => PyOSError::new_err(msg),
        e if e.is_input_error() => PyValueError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

/// Filters of one conv layer, shape `(n, w, h, c)`, float32 values.
#[pyclass(name = "FilterTensor", frozen)]
struct PyFilterTensor {
    inner: simprune::tensor_io::FilterTensor,
}

#[pymethods]
impl PyFilterTensor {
    #[new]
    fn new(name: String, dims: [usize; 4], data: Vec<f32>) -> PyResult<Self> {
        simprune::tensor_io::FilterTensor::new(name, dims, data)
            .map(|inner| PyFilterTensor { inner })
            .map_err(to_py)
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn dims(&self) -> [usize; 4] {
        self.inner.dims()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Flat values in `(n, w, h, c)` order.
    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn filter(&self, index: usize) -> PyResult<Vec<f32>> {
        if index >= self.inner.n() {
            return Err(PyValueError::new_err(format!(
                "filter {index} out of range for {} filters",
                self.inner.n()
            )));
        }
        Ok(self.inner.filter(index).to_vec())
    }

    fn __repr__(&self) -> String {
        format!("FilterTensor({:?}, dims={:?})", self.inner.name(), self.inner.dims())
    }
}

/// Unit representatives of a layer's filters, one column per filter.
#[pyclass(name = "Representatives", frozen)]
struct PyRepresentatives {
    inner: simprune::representatives::RepresentativeMatrix,
}

#[pymethods]
impl PyRepresentatives {
    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn column(&self, index: usize) -> PyResult<Vec<f64>> {
        if index >= self.inner.n() {
            return Err(PyValueError::new_err(format!("column {index} out of range")));
        }
        Ok(self.inner.column(index).to_vec())
    }

    fn degenerate(&self) -> Vec<bool> {
        self.inner.degenerate_flags().to_vec()
    }

    /// Number of singular values above `rel_tol` times the largest.
    #[pyo3(signature = (rel_tol = 1e-6))]
    fn numerical_rank(&self, rel_tol: f64) -> PyResult<usize> {
        core_rank(&self.inner, rel_tol).map_err(to_py)
    }
}

#[pyclass(name = "SelectionOutcome", frozen)]
struct PySelectionOutcome {
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    m: Option<usize>,
    #[pyo3(get)]
    k: Option<usize>,
    #[pyo3(get)]
    important: Vec<usize>,
    #[pyo3(get)]
    redundant: Vec<usize>,
    /// `(source, target, distance)` sorted by distance.
    #[pyo3(get)]
    pairs: Vec<(usize, usize, f64)>,
}

impl From<CoreOutcome> for PySelectionOutcome {
    fn from(o: CoreOutcome) -> Self {
        let (m, k) = match o.method {
            SelectionMethod::SimilarityNystrom { m, k } => (Some(m), Some(k)),
            _ => (None, None),
        };
        PySelectionOutcome {
            method: o.method.label().to_string(),
            m,
            k,
            important: o.important,
            redundant: o.redundant,
            pairs: o.pairs.iter().map(|p| (p.source, p.target, p.distance)).collect(),
        }
    }
}

#[pymethods]
impl PySelectionOutcome {
    /// Kept filters, ascending.
    fn keep_set(&self) -> Vec<usize> {
        let mut keep = self.important.clone();
        keep.sort_unstable();
        keep
    }

    fn __repr__(&self) -> String {
        format!(
            "SelectionOutcome(method={:?}, important={:?}, redundant={:?})",
            self.method, self.important, self.redundant
        )
    }
}

#[pyfunction]
fn read_weights(path: &str) -> PyResult<Vec<PyFilterTensor>> {
    let map = core_read(path).map_err(to_py)?;
    Ok(map.into_values().map(|inner| PyFilterTensor { inner }).collect())
}

#[pyfunction]
fn write_weights(path: &str, tensors: Vec<PyRef<'_, PyFilterTensor>>) -> PyResult<()> {
    let mut map = WeightMap::new();
    for t in tensors {
        let name = t.inner.name().to_string();
        if map.insert(name.clone(), t.inner.clone()).is_some() {
            return Err(PyValueError::new_err(format!("duplicate tensor name '{name}'")));
        }
    }
    core_write(&map, path).map_err(to_py)
}

/// Parse and validate a manifest; returns it re-serialized.
#[pyfunction]
fn validate_manifest(json: &str) -> PyResult<String> {
    let manifest = parse_manifest(json).map_err(to_py)?;
    serde_json_string(&manifest.layers)
}

fn serde_json_string<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn representatives(layer: &PyFilterTensor) -> PyResult<PyRepresentatives> {
    build_representative_matrix(&layer.inner)
        .map(|inner| PyRepresentatives { inner })
        .map_err(to_py)
}

fn column_selection(random_seed: Option<u64>) -> ColumnSelection {
    match random_seed {
        Some(seed) => ColumnSelection::Random { seed },
        None => ColumnSelection::First,
    }
}

#[pyfunction]
fn exact_similarity(r: &PyRepresentatives) -> Vec<Vec<f64>> {
    core_exact(&r.inner).values.to_rows()
}

#[pyfunction]
#[pyo3(signature = (r, m, k, random_seed = None))]
fn nystrom_similarity(
    r: &PyRepresentatives,
    m: usize,
    k: usize,
    random_seed: Option<u64>,
) -> PyResult<Vec<Vec<f64>>> {
    let model = NystromModel::fit(&r.inner, m, column_selection(random_seed)).map_err(to_py)?;
    Ok(model.similarity(k).map_err(to_py)?.values.to_rows())
}

fn error_norm(norm: &str) -> PyResult<ErrorNorm> {
    match norm {
        "spectral" => Ok(ErrorNorm::Spectral),
        "frobenius" => Ok(ErrorNorm::Frobenius),
        other => Err(PyValueError::new_err(format!(
            "norm must be 'spectral' or 'frobenius', got '{other}'"
        ))),
    }
}

/// Distance-matrix error of the `(m, k)` approximation.
#[pyfunction]
#[pyo3(signature = (r, m, k, norm = "spectral", random_seed = None))]
fn approximation_error(
    r: &PyRepresentatives,
    m: usize,
    k: usize,
    norm: &str,
    random_seed: Option<u64>,
) -> PyResult<f64> {
    let norm = error_norm(norm)?;
    let exact = to_distance(&core_exact(&r.inner));
    let model = NystromModel::fit(&r.inner, m, column_selection(random_seed)).map_err(to_py)?;
    let approx = to_distance(&model.similarity(k).map_err(to_py)?);
    core_error(&exact, &approx, norm).map_err(to_py)
}

/// Smallest `(m, k)` with error below `threshold`; returns `(m, k, delta)`.
#[pyfunction]
#[pyo3(signature = (r, threshold = 1.0, norm = "spectral", random_seed = None))]
fn auto_mk(
    r: &PyRepresentatives,
    threshold: f64,
    norm: &str,
    random_seed: Option<u64>,
) -> PyResult<(usize, usize, f64)> {
    let exact = to_distance(&core_exact(&r.inner));
    let c = core_auto_mk(
        &r.inner,
        &exact,
        threshold,
        error_norm(norm)?,
        column_selection(random_seed),
    )
    .map_err(to_py)?;
    Ok((c.m, c.k, c.delta))
}

/// Similarity-based selection; `m` and `k` switch to the approximation.
#[pyfunction]
#[pyo3(signature = (r, m = None, k = None, strict = false, random_seed = None))]
fn select(
    r: &PyRepresentatives,
    m: Option<usize>,
    k: Option<usize>,
    strict: bool,
    random_seed: Option<u64>,
) -> PyResult<PySelectionOutcome> {
    let method = match (m, k) {
        (None, None) => SimilarityMethod::Exact,
        (Some(m), k) => SimilarityMethod::Nystrom {
            m,
            k: k.unwrap_or(m),
            selection: column_selection(random_seed),
        },
        (None, Some(_)) => return Err(PyValueError::new_err("k requires m")),
    };
    let mode = if strict {
        GreedyMode::Strict
    } else {
        GreedyMode::Verbatim
    };
    select_layer(&r.inner, &method, mode)
        .map(Into::into)
        .map_err(to_py)
}

#[pyfunction]
fn l1_ranking(layer: &PyFilterTensor) -> Vec<usize> {
    core_l1_ranking(&layer.inner)
}

#[pyfunction]
#[pyo3(signature = (layer, surrogate = false))]
fn gm_ranking(layer: &PyFilterTensor, surrogate: bool) -> PyResult<Vec<usize>> {
    let mode = if surrogate {
        GmMode::Surrogate
    } else {
        GmMode::Weiszfeld
    };
    core_gm_ranking(&layer.inner, mode).map_err(to_py)
}

/// Keep the `count` highest-ranked filters of a norm baseline.
#[pyfunction]
#[pyo3(signature = (layer, count, method = "l1"))]
fn baseline_select(layer: &PyFilterTensor, count: usize, method: &str) -> PyResult<PySelectionOutcome> {
    let (ranking, method) = match method {
        "l1" => (core_l1_ranking(&layer.inner), SelectionMethod::L1),
        "gm" => (
            core_gm_ranking(&layer.inner, GmMode::Weiszfeld).map_err(to_py)?,
            SelectionMethod::Gm,
        ),
        other => return Err(PyValueError::new_err(format!("unknown baseline '{other}'"))),
    };
    baseline_outcome(&ranking, count, method)
        .map(Into::into)
        .map_err(to_py)
}

/// Prune plan JSON from a manifest JSON and 0-based keep sets per conv layer.
#[pyfunction]
fn prune_plan(manifest_json: &str, keeps: HashMap<String, Vec<usize>>) -> PyResult<String> {
    let manifest = parse_manifest(manifest_json).map_err(to_py)?;
    let plan = build_plan(&manifest, &keeps).map_err(to_py)?;
    plan_to_json(&plan).map_err(to_py)
}

/// Run the command-line tool with `args` (without the program name);
/// returns the exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| simprune::cli::run(std::iter::once("simprune".to_string()).chain(args)))
}

#[pymodule]
fn simprune_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFilterTensor>()?;
    m.add_class::<PyRepresentatives>()?;
    m.add_class::<PySelectionOutcome>()?;
    m.add_function(wrap_pyfunction!(read_weights, m)?)?;
    m.add_function(wrap_pyfunction!(write_weights, m)?)?;
    m.add_function(wrap_pyfunction!(validate_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(representatives, m)?)?;
    m.add_function(wrap_pyfunction!(exact_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(nystrom_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(approximation_error, m)?)?;
    m.add_function(wrap_pyfunction!(auto_mk, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(l1_ranking, m)?)?;
    m.add_function(wrap_pyfunction!(gm_ranking, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_select, m)?)?;
    m.add_function(wrap_pyfunction!(prune_plan, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
