//! Python bindings: run the pipeline, load bundles and query them through the same
//! handler the HTTP service uses.

use std::path::PathBuf;

use policy_frames::analysis;
use policy_frames::api::respond;
use policy_frames::json;
use policy_frames::pipeline::{Pipeline, PipelineConfig, ResultBundle};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(policy_frames, PolicyFramesError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    PolicyFramesError::new_err(e.to_string())
}

fn loads<'py>(py: Python<'py>, bytes: &[u8]) -> PyResult<Bound<'py, PyAny>> {
    let text = std::str::from_utf8(bytes).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Runs every stage and writes the bundle; returns its path.
#[pyfunction]
#[pyo3(signature = (config, out_dir, seed = None, cache = true))]
fn run_pipeline(py: Python<'_>, config: PathBuf, out_dir: PathBuf, seed: Option<u64>, cache: bool) -> PyResult<String> {
    py.detach(|| {
        let mut cfg = PipelineConfig::load(&config).map_err(err)?;
        if let Some(s) = seed {
            cfg.seed = s;
            cfg.tsne.seed = s;
        }
        cfg.output.cache = cache;
        let (_, path) = Pipeline::new(cfg, out_dir).run().map_err(err)?;
        Ok(path.display().to_string())
    })
}

/// Jensen-Shannon divergence in nats.
#[pyfunction]
fn information_radius(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    analysis::information_radius(&p, &q).map_err(err)
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    analysis::spearman(&x, &y).map_err(err)
}

/// Objectives-vs-policies divergence divided by the number of topics.
#[pyfunction]
fn section_inconsistency(objectives: Vec<f64>, policies: Vec<f64>) -> PyResult<f64> {
    analysis::section_inconsistency(&objectives, &policies, objectives.len()).map_err(err)
}

/// A loaded result bundle. Read-only.
#[pyclass(frozen, module = "policy_frames")]
struct Bundle {
    inner: ResultBundle,
}

#[pymethods]
impl Bundle {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        Ok(Bundle { inner: ResultBundle::read(&path).map_err(err)? })
    }

    #[getter]
    fn schema_version(&self) -> &str {
        &self.inner.schema_version
    }

    fn subsets(&self) -> Vec<String> {
        self.inner.subsets.keys().map(|s| s.to_string()).collect()
    }

    /// Empty when the bundle is internally consistent.
    fn validate(&self) -> Vec<String> {
        self.inner.validate().err().unwrap_or_default()
    }

    /// `(status, body)` for an API path such as `/api/theta`.
    #[pyo3(signature = (path, query = ""))]
    fn request<'py>(&self, py: Python<'py>, path: &str, query: &str) -> PyResult<(u16, Bound<'py, PyAny>)> {
        let r = respond(&self.inner, path, query);
        let bytes = json::to_vec(&r.body).map_err(err)?;
        Ok((r.status, loads(py, &bytes)?))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        loads(py, &self.inner.to_bytes())
    }

    fn __repr__(&self) -> String {
        format!("Bundle(schema_version={:?}, subsets={})", self.inner.schema_version, self.inner.subsets.len())
    }
}

#[pymodule(name = "policy_frames")]
pub fn policy_frames_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PolicyFramesError", m.py().get_type::<PolicyFramesError>())?;
    m.add_class::<Bundle>()?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(information_radius, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(section_inconsistency, m)?)?;
    Ok(())
}
