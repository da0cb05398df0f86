//! Python bindings. Matrices cross the boundary as lists of rows; structured
//! results come back as plain dicts.

use modsc_core as core;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use core::clustering::{self, LaplacianVariant, SaacRule};
use core::latentgen::DecoderParams;
use core::pipeline::{self, ExperimentConfig};
use core::structure::{self as st, StructureParams};

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(_) | core::Error::Json(_) | core::Error::NonFinite(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn load_config(toml: Option<&str>) -> PyResult<ExperimentConfig> {
    let cfg = match toml {
        Some(t) => ExperimentConfig::from_toml_str(t).map_err(err)?,
        None => ExperimentConfig::default(),
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

fn laplacian_variant(name: &str) -> PyResult<LaplacianVariant> {
    match name {
        "unnormalized" => Ok(LaplacianVariant::Unnormalized),
        "symmetric" => Ok(LaplacianVariant::Symmetric),
        _ => Err(PyValueError::new_err(format!("unknown laplacian {name:?}"))),
    }
}

/// Binary latent-to-feature incidence Γ (rows = features, columns = latents).
#[pyclass(name = "StructuralGraph", module = "modsc", from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: st::StructuralGraph,
}

#[pymethods]
impl PyGraph {
    #[staticmethod]
    #[pyo3(signature = (d_x, m, seed, alpha = 0.0, min_per_subspace = 2))]
    fn generate(d_x: usize, m: usize, seed: u64, alpha: f64, min_per_subspace: usize) -> PyResult<Self> {
        let p = StructureParams::new(d_x, m, seed)
            .with_overlap(alpha)
            .with_min_per_subspace(min_per_subspace);
        Ok(Self {
            inner: st::generate_structure(&p).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_rows(rows: Vec<Vec<u8>>) -> PyResult<Self> {
        Ok(Self {
            inner: st::StructuralGraph::from_rows(&rows).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: st::StructuralGraph::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn d_x(&self) -> usize {
        self.inner.d_x()
    }

    #[getter]
    fn d_z(&self) -> usize {
        self.inner.d_z()
    }

    fn rows(&self) -> Vec<Vec<u8>> {
        self.inner.rows()
    }

    fn parents(&self, i: usize) -> PyResult<Vec<usize>> {
        if i >= self.inner.d_x() {
            return Err(PyValueError::new_err(format!("feature {i} out of range")));
        }
        Ok(self.inner.parents(i))
    }

    fn children(&self, k: usize) -> PyResult<Vec<usize>> {
        if k >= self.inner.d_z() {
            return Err(PyValueError::new_err(format!("latent {k} out of range")));
        }
        Ok(self.inner.children(k))
    }

    /// Shared-parent components as canonical labels.
    fn disjoint_clusters(&self) -> Vec<usize> {
        st::derive_disjoint_clusters(&self.inner)
    }

    /// Children set of every latent.
    fn overlapping_clusters(&self) -> Vec<Vec<usize>> {
        st::derive_overlapping_clusters(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("StructuralGraph(d_x={}, d_z={})", self.inner.d_x(), self.inner.d_z())
    }
}

/// Sparsity-respecting decoder f: z -> x.
#[pyclass(name = "Decoder", module = "modsc")]
struct PyDecoder {
    inner: DecoderParams,
}

#[pymethods]
impl PyDecoder {
    #[new]
    fn new(graph: &PyGraph, seed: u64) -> Self {
        Self {
            inner: DecoderParams::random(&graph.inner, seed),
        }
    }

    fn decode(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&z)?;
        Ok(self.inner.decode(&z).0)
    }

    /// `d_z × d_x` Jacobian; column `i` is the gradient of feature `i`.
    fn jacobian(&self, z: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.check(&z)?;
        Ok(rows_of(&core::jacobian::analytic_jacobian(&z, &self.inner)))
    }

    /// Expected Gram `E[JᵀJ]` over the given latent points.
    #[pyo3(signature = (latents, normalize = true))]
    fn expected_gram(&self, latents: Vec<Vec<f64>>, normalize: bool) -> PyResult<Vec<Vec<f64>>> {
        for z in &latents {
            self.check(z)?;
        }
        let g = core::jacobian::expected_gram(&latents, &self.inner, normalize).map_err(err)?;
        Ok(rows_of(&g))
    }

    #[getter]
    fn d_x(&self) -> usize {
        self.inner.d_x()
    }

    #[getter]
    fn d_z(&self) -> usize {
        self.inner.d_z()
    }
}

impl PyDecoder {
    fn check(&self, z: &[f64]) -> PyResult<()> {
        if z.len() != self.inner.d_z() {
            return Err(PyValueError::new_err(format!(
                "latent has length {}, decoder expects {}",
                z.len(),
                self.inner.d_z()
            )));
        }
        Ok(())
    }
}

/// Default experiment configuration as commented TOML.
#[pyfunction]
fn config_template() -> String {
    pipeline::config_template()
}

/// Jacobian Gram matrix of one generated instance.
#[pyfunction]
#[pyo3(signature = (seed, config = None))]
fn instance_gram(seed: u64, config: Option<&str>) -> PyResult<(PyGraph, Vec<Vec<f64>>)> {
    let cfg = load_config(config)?;
    let g = pipeline::generate(&cfg, seed).map_err(err)?;
    let decoder = pipeline::decoder_for(&cfg, &g.graph, seed);
    let gram = pipeline::gram_for(&cfg, &decoder, &g.trajectories.z, g.trajectories.lag, seed).map_err(err)?;
    Ok((PyGraph { inner: g.graph }, rows_of(&gram)))
}

/// Penalized self-expression `C` (zero diagonal) for a Gram matrix.
#[pyfunction]
#[pyo3(signature = (gram, lam, tol = 1e-10, max_iter = 20000))]
fn self_expression(gram: Vec<Vec<f64>>, lam: f64, tol: f64, max_iter: usize) -> PyResult<Vec<Vec<f64>>> {
    let g = matrix(gram)?;
    let s = core::selfexpr::solve_penalized_global(&g, lam, tol, max_iter).map_err(err)?;
    Ok(rows_of(&s.c))
}

/// Per-column subspace detection verdicts.
#[pyfunction]
#[pyo3(signature = (c, labels, tau = 1e-6))]
fn subspace_detection(py: Python<'_>, c: Vec<Vec<f64>>, labels: Vec<usize>, tau: f64) -> PyResult<Py<PyAny>> {
    let r = core::selfexpr::check_subspace_detection(&matrix(c)?, &labels, tau).map_err(err)?;
    to_py(py, &r)
}

/// Eigengap cluster count of the affinity `|C| + |C|ᵀ`.
#[pyfunction]
#[pyo3(signature = (c, max_k = None, laplacian = "unnormalized"))]
fn eigengap(py: Python<'_>, c: Vec<Vec<f64>>, max_k: Option<usize>, laplacian: &str) -> PyResult<Py<PyAny>> {
    let a = clustering::affinity_from_c(&matrix(c)?).map_err(err)?;
    let l = clustering::laplacian(&a, laplacian_variant(laplacian)?);
    let n = l.nrows();
    let r = clustering::eigengap_k_bounded(&l, max_k.unwrap_or(n.saturating_sub(1))).map_err(err)?;
    to_py(py, &r)
}

/// Disjoint labels by spectral clustering of `|C| + |C|ᵀ`.
#[pyfunction]
#[pyo3(signature = (c, k, seed = 0, laplacian = "unnormalized"))]
fn spectral_cluster(c: Vec<Vec<f64>>, k: usize, seed: u64, laplacian: &str) -> PyResult<Vec<usize>> {
    let a = clustering::affinity_from_c(&matrix(c)?).map_err(err)?;
    let r = clustering::spectral_cluster(&a, k, laplacian_variant(laplacian)?, seed).map_err(err)?;
    r.labels()
        .ok_or_else(|| PyRuntimeError::new_err("spectral clustering returned overlapping memberships"))
}

/// Overlapping memberships from SymNMF of `|C| + |C|ᵀ` and rounding.
#[pyfunction]
#[pyo3(signature = (c, k, seed = 0, max_iter = 2000, tol = 1e-9, tie_tol = 0.2))]
fn symnmf_cluster(c: Vec<Vec<f64>>, k: usize, seed: u64, max_iter: usize, tol: f64, tie_tol: f64) -> PyResult<Vec<Vec<usize>>> {
    let a = clustering::affinity_from_c(&matrix(c)?).map_err(err)?;
    let y = clustering::symnmf(&a.a, k, max_iter, tol, seed).map_err(err)?;
    Ok(clustering::round_memberships(&y.y, tie_tol).map_err(err)?.assignments)
}

/// Overlapping memberships from SAAC on `|C| + |C|ᵀ`.
#[pyfunction]
#[pyo3(signature = (c, k, seed = 0, max_iter = 300, tie_tol = 0.2, rule = "nearest"))]
fn saac_cluster(c: Vec<Vec<f64>>, k: usize, seed: u64, max_iter: usize, tie_tol: f64, rule: &str) -> PyResult<Vec<Vec<usize>>> {
    let rule = match rule {
        "nearest" => SaacRule::Nearest,
        "additive" => SaacRule::Additive,
        _ => return Err(PyValueError::new_err(format!("unknown rule {rule:?}"))),
    };
    let a = clustering::affinity_from_c(&matrix(c)?).map_err(err)?;
    Ok(clustering::saac_with(&a, k, max_iter, tie_tol, rule, seed).map_err(err)?.assignments)
}

/// `(homogeneity, completeness, nmi)`.
#[pyfunction]
fn v_measure(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<(f64, f64, f64)> {
    let v = core::metrics::v_measure(&pred, &truth).map_err(err)?;
    Ok((v.homogeneity, v.completeness, v.nmi))
}

#[pyfunction]
fn onmi(pred: Vec<Vec<usize>>, truth: Vec<Vec<usize>>) -> PyResult<f64> {
    core::metrics::onmi(&pred, &truth).map_err(err)
}

#[pyfunction]
fn overlap_f1(pred: Vec<Vec<usize>>, truth: Vec<Vec<usize>>) -> PyResult<f64> {
    core::metrics::overlap_f1(&pred, &truth).map_err(err)
}

#[pyfunction]
fn omega_index(pred: Vec<Vec<usize>>, truth: Vec<Vec<usize>>, n: usize) -> PyResult<f64> {
    core::metrics::omega_index(&pred, &truth, n).map_err(err)
}

/// Full pipeline for one seed; returns the per-seed report.
#[pyfunction]
#[pyo3(signature = (seed, config = None))]
fn run_seed(py: Python<'_>, seed: u64, config: Option<&str>) -> PyResult<Py<PyAny>> {
    let cfg = load_config(config)?;
    pipeline::check_mode(cfg.structure.alpha, cfg.cluster.mode).map_err(err)?;
    let a = py.detach(|| pipeline::run_seed(&cfg, seed)).map_err(err)?;
    to_py(py, &a.report)
}

/// Full pipeline over the configured seeds; returns the aggregate report.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn run_experiment(py: Python<'_>, config: Option<&str>) -> PyResult<Py<PyAny>> {
    let cfg = load_config(config)?;
    let r = py.detach(|| pipeline::run_experiment(&cfg)).map_err(err)?;
    to_py(py, &r)
}

/// Verification suite; returns every check with its measured value.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn run_theory_suite(py: Python<'_>, config: Option<&str>) -> PyResult<Py<PyAny>> {
    let cfg = load_config(config)?;
    let r = py.detach(|| pipeline::run_theory_suite(&cfg)).map_err(err)?;
    to_py(py, &r)
}

#[pymodule]
fn modsc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyDecoder>()?;
    m.add_function(wrap_pyfunction!(config_template, m)?)?;
    m.add_function(wrap_pyfunction!(instance_gram, m)?)?;
    m.add_function(wrap_pyfunction!(self_expression, m)?)?;
    m.add_function(wrap_pyfunction!(subspace_detection, m)?)?;
    m.add_function(wrap_pyfunction!(eigengap, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(symnmf_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(saac_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(v_measure, m)?)?;
    m.add_function(wrap_pyfunction!(onmi, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_f1, m)?)?;
    m.add_function(wrap_pyfunction!(omega_index, m)?)?;
    m.add_function(wrap_pyfunction!(run_seed, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_theory_suite, m)?)?;
    Ok(())
}
