//! Python module `sklab_py`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use sklab::experiment_harness::{self, ExperimentConfig};
use sklab::fluctuation_lab;
use sklab::reduction_solver;
use sklab::rmt_core::{self, GoeSample, SpectralMode};
use sklab::theory_engine::{self, RadialSpec, SpikeSpec};
use sklab::verify::{self, Scale};
use sklab::SkError;

fn err(e: SkError) -> PyErr {
    match e {
        SkError::Numerical(_) | SkError::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts a JSON tree to plain Python objects.
fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn serialize<'py, T: serde::Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(x).map_err(json_err)?)
}

fn spike(s: &str) -> PyResult<SpikeSpec> {
    s.parse().map_err(err)
}

fn radial(s: &str) -> PyResult<RadialSpec> {
    s.parse().map_err(err)
}

/// One draw `(λ, u)` in the eigenbasis.
#[pyclass(name = "Sample", frozen)]
struct PySample(GoeSample);

#[pymethods]
impl PySample {
    #[new]
    fn new(eigenvalues: Vec<f64>, u: Vec<f64>) -> PyResult<Self> {
        GoeSample::from_parts(eigenvalues, u).map(Self).map_err(err)
    }

    /// Samples the model; `mode` is `"invariance"` or `"rotate"`.
    #[staticmethod]
    #[pyo3(signature = (n, seed, mode = "invariance"))]
    fn draw(n: usize, seed: u64, mode: &str) -> PyResult<Self> {
        let mode = match mode {
            "invariance" => SpectralMode::Invariance,
            "rotate" => SpectralMode::Rotate,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        rmt_core::sample_spectral_model(n, seed, mode).map(Self).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues.clone()
    }

    #[getter]
    fn u(&self) -> Vec<f64> {
        self.0.u.clone()
    }

    fn __repr__(&self) -> String {
        format!("Sample(n={}, lambda_max={})", self.0.n(), self.0.lambda_max())
    }
}

#[pyfunction]
fn derive_seed(master: u64, index: u64) -> u64 {
    experiment_harness::derive_seed(master, index)
}

#[pyfunction]
#[pyo3(signature = (l, order = 0))]
fn semicircle_stieltjes(l: f64, order: u32) -> PyResult<f64> {
    rmt_core::semicircle_stieltjes(l, order).map_err(err)
}

#[pyfunction]
fn classical_locations(n: usize) -> PyResult<Vec<f64>> {
    rmt_core::classical_locations(n).map_err(err)
}

/// Limit maximiser; pass `radial` (e.g. `"tap:1.0"`) for the ball.
#[pyfunction]
#[pyo3(signature = (spike_spec, beta, radial_spec = None))]
fn leading_order<'py>(py: Python<'py>, spike_spec: &str, beta: f64, radial_spec: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let f = spike(spike_spec)?;
    let lo = match radial_spec {
        Some(g) => theory_engine::maximize_ball_theory(&f, &radial(g)?, beta),
        None => theory_engine::maximize_sphere_theory(&f, beta),
    }
    .map_err(err)?;
    serialize(py, &lo)
}

/// Second-order constants at the limit maximiser.
#[pyfunction]
#[pyo3(signature = (spike_spec, beta, radial_spec = None))]
fn fluctuation_params<'py>(
    py: Python<'py>,
    spike_spec: &str,
    beta: f64,
    radial_spec: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let f = spike(spike_spec)?;
    let fp = match radial_spec {
        Some(g) => {
            let g = radial(g)?;
            let lo = theory_engine::maximize_ball_theory(&f, &g, beta).map_err(err)?;
            theory_engine::fluct_params_ball(&f, &g, beta, &lo)
        }
        None => {
            let lo = theory_engine::maximize_sphere_theory(&f, beta).map_err(err)?;
            theory_engine::fluct_params_sphere(&f, beta, &lo)
        }
    }
    .map_err(err)?;
    serialize(py, &fp)
}

#[pyfunction]
fn solve_sphere<'py>(py: Python<'py>, sample: &PySample, beta: f64, spike_spec: &str) -> PyResult<Bound<'py, PyAny>> {
    let sol = reduction_solver::solve_sphere(&sample.0, beta, &spike(spike_spec)?).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("value", sol.l_n)?;
    d.set_item("alpha_star", sol.alpha_star)?;
    d.set_item("paired_alpha", sol.paired_alpha)?;
    d.set_item("l_star", sol.l_star.finite())?;
    Ok(d.into_any())
}

/// Ball solve over `domain` (defaults to the admissible radii of `radial`).
#[pyfunction]
#[pyo3(signature = (sample, beta, spike_spec, radial_spec, domain = None))]
fn solve_ball<'py>(
    py: Python<'py>,
    sample: &PySample,
    beta: f64,
    spike_spec: &str,
    radial_spec: &str,
    domain: Option<Vec<(f64, f64)>>,
) -> PyResult<Bound<'py, PyAny>> {
    let g = radial(radial_spec)?;
    let domain = domain.unwrap_or_else(|| vec![g.domain()]);
    let sol = reduction_solver::solve_ball(&sample.0, beta, &spike(spike_spec)?, &g, &domain).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("value", sol.l_tilde_n)?;
    d.set_item("alpha_star", sol.alpha_star)?;
    d.set_item("r_star", sol.r_star)?;
    d.set_item("l_star", sol.l_star.finite())?;
    Ok(d.into_any())
}

#[pyfunction]
fn compute_statistics<'py>(py: Python<'py>, sample: &PySample, l_hat: f64) -> PyResult<Bound<'py, PyAny>> {
    serialize(py, &fluctuation_lab::compute_statistics(&sample.0, l_hat).map_err(err)?)
}

/// Runs a campaign from a JSON configuration; returns the output as JSON.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg: ExperimentConfig = serde_json::from_str(config_json).map_err(json_err)?;
    let out = py.detach(|| experiment_harness::run_experiment(&cfg)).map_err(err)?;
    serde_json::to_string(&out).map_err(json_err)
}

/// Runs acceptance criterion `id`; returns `(passed, report line)`.
#[pyfunction]
#[pyo3(signature = (id, quick = true))]
fn run_criterion(py: Python<'_>, id: u8, quick: bool) -> PyResult<(bool, String)> {
    let scale = if quick { Scale::Quick } else { Scale::Full };
    let o = py.detach(|| verify::run_criterion(id, scale)).map_err(err)?;
    Ok((o.pass, o.to_string()))
}

#[pymodule]
pub fn sklab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySample>()?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(semicircle_stieltjes, m)?)?;
    m.add_function(wrap_pyfunction!(classical_locations, m)?)?;
    m.add_function(wrap_pyfunction!(leading_order, m)?)?;
    m.add_function(wrap_pyfunction!(fluctuation_params, m)?)?;
    m.add_function(wrap_pyfunction!(solve_sphere, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ball, m)?)?;
    m.add_function(wrap_pyfunction!(compute_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_criterion, m)?)?;
    Ok(())
}
