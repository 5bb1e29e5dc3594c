//! Python bindings: model evaluation, reduction, branches, eigenvalues and
//! growth rates. Structured results are returned as plain dicts.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use sktshadow::basis::neumann_eigenpair;
use sktshadow::evolution::{growth_rate, GrowthOptions};
use sktshadow::pipeline;
use sktshadow::reduction::{hj as hj_core, reduce as reduce_core};
use sktshadow::solver::continue_branch;
use sktshadow::spectra::{assemble_pencil, eigen_near_zero};
use sktshadow::{model, Domain1D, EpsilonContext, NewtonOptions, Sign, SktError, StationaryProblem};

fn err(e: SktError) -> PyErr {
    match e {
        SktError::Config(_) | SktError::InvalidParams(_) | SktError::ContextInvalid(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn sign(s: &str) -> PyResult<Sign> {
    match s {
        "plus" | "+" => Ok(Sign::Plus),
        "minus" | "-" => Ok(Sign::Minus),
        _ => Err(PyValueError::new_err(format!("sign must be 'plus' or 'minus', got {s:?}"))),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

/// Reaction and cross-diffusion coefficients.
#[pyclass(name = "Params")]
#[derive(Clone, Copy)]
struct PyParams(model::Params);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (a1, a2, b1, b2, c1, c2, d1, beta=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(a1: f64, a2: f64, b1: f64, b2: f64, c1: f64, c2: f64, d1: f64, beta: f64) -> PyResult<Self> {
        model::Params::new(a1, a2, b1, b2, c1, c2, d1, beta).map(PyParams).map_err(err)
    }

    /// The worked parameter set.
    #[staticmethod]
    fn worked() -> Self {
        PyParams(model::Params::worked())
    }

    fn as_dict(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.0)
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "Params(a1={}, a2={}, b1={}, b2={}, c1={}, c2={}, d1={}, beta={})",
            p.a1, p.a2, p.b1, p.b2, p.c1, p.c2, p.d1, p.beta
        )
    }
}

fn lambda_of(j: usize, length: f64) -> f64 {
    (j as f64 * std::f64::consts::PI / length).powi(2)
}

/// Inverse change of variables `(phi, psi) -> (u, w~)` at a given eps.
#[pyfunction]
#[pyo3(signature = (phi, psi, eps, params, j=1, length=1.0))]
fn h_eps(phi: f64, psi: f64, eps: f64, params: &PyParams, j: usize, length: f64) -> PyResult<(f64, f64)> {
    let ctx = EpsilonContext::new(j, lambda_of(j, length), eps, &params.0).map_err(err)?;
    model::h_eps(phi, psi, &ctx, &params.0).map_err(err)
}

/// `h_j(mu)` for the mode `j` on `[0, length]`.
#[pyfunction]
#[pyo3(signature = (mu, j=1, length=1.0, n=256))]
fn hj(mu: f64, j: usize, length: f64, n: usize) -> PyResult<f64> {
    let dom = Domain1D::new(length, n).map_err(err)?;
    let mode = neumann_eigenpair(&dom, j).map_err(err)?;
    hj_core(mu, &mode).map_err(err)
}

/// Limiting root `(mu0, s0, ...)` of the reduced problem.
#[pyfunction]
#[pyo3(signature = (params, j=1, sign="plus", length=1.0, n=256))]
fn reduce(py: Python<'_>, params: &PyParams, j: usize, sign: &str, length: f64, n: usize) -> PyResult<PyObject> {
    let dom = Domain1D::new(length, n).map_err(err)?;
    let mode = neumann_eigenpair(&dom, j).map_err(err)?;
    let root = reduce_core(&params.0, &mode, self::sign(sign)?).map_err(err)?;
    to_py(py, &root)
}

/// Run a JSON config; returns `(exit_code, summary)`.
#[pyfunction]
fn run(py: Python<'_>, config: PathBuf) -> PyResult<(i32, PyObject)> {
    let report = py.allow_threads(|| pipeline::run(&config)).map_err(err)?;
    Ok((report.exit_code(), to_py(py, &report.summary)?))
}

/// A discretized problem for one mode.
#[pyclass]
struct Model {
    params: model::Params,
    dom: Arc<Domain1D>,
    j: usize,
}

impl Model {
    fn point(&self, eps: f64, sign: Sign) -> Result<(StationaryProblem, sktshadow::BranchPoint), SktError> {
        let prob = StationaryProblem::new(self.params, self.dom.clone(), self.j, eps, 0.0)?;
        let mut branch = continue_branch(&prob, &[eps], sign, &NewtonOptions::default())?;
        Ok((prob, branch.points.remove(0)))
    }
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (params, n=128, j=1, length=1.0))]
    fn new(params: &PyParams, n: usize, j: usize, length: f64) -> PyResult<Self> {
        let dom = Domain1D::new(length, n).map_err(err)?;
        neumann_eigenpair(&dom, j).map_err(err)?;
        Ok(Model { params: params.0, dom: Arc::new(dom), j })
    }

    /// Steady states along a descending eps grid.
    #[pyo3(signature = (eps, sign="plus"))]
    fn branch(&self, py: Python<'_>, eps: Vec<f64>, sign: &str) -> PyResult<PyObject> {
        let sign = self::sign(sign)?;
        let prob = StationaryProblem::new(self.params, self.dom.clone(), self.j, eps[0], 0.0).map_err(err)?;
        let branch = py
            .allow_threads(|| continue_branch(&prob, &eps, sign, &NewtonOptions::default()))
            .map_err(err)?;
        to_py(py, &branch.points)
    }

    /// Unstable eigenvalue of the linearization at the branch point for `eps`.
    #[pyo3(signature = (eps, sign="plus"))]
    fn eigen(&self, py: Python<'_>, eps: f64, sign: &str) -> PyResult<PyObject> {
        let sign = self::sign(sign)?;
        let e = py
            .allow_threads(|| {
                let (prob, pt) = self.point(eps, sign)?;
                let mu0 = reduce_core(&self.params, prob.mode(), sign)?.mu0;
                eigen_near_zero(&assemble_pencil(&pt, &prob, mu0)?)
            })
            .map_err(err)?;
        let out = PyDict::new_bound(py);
        out.set_item("sigma", e.sigma)?;
        out.set_item("lambda_ratio", e.lambda_ratio(lambda_of(self.j, self.dom.length())))?;
        out.set_item("gamma", e.gamma)?;
        out.set_item("residual", e.residual)?;
        Ok(out.into_any().unbind())
    }

    /// Growth rate of a small perturbation along the unstable eigenfunction.
    #[pyo3(signature = (eps, sign="plus"))]
    fn growth(&self, py: Python<'_>, eps: f64, sign: &str) -> PyResult<PyObject> {
        let sign = self::sign(sign)?;
        let g = py
            .allow_threads(|| {
                let (prob, pt) = self.point(eps, sign)?;
                let mu0 = reduce_core(&self.params, prob.mode(), sign)?.mu0;
                let e = eigen_near_zero(&assemble_pencil(&pt, &prob, mu0)?)?;
                growth_rate(&pt, &e.eigfield, e.sigma, &prob, &GrowthOptions::default()).map(|g| (e.sigma, g))
            })
            .map_err(err)?;
        let out = PyDict::new_bound(py);
        out.set_item("sigma", g.0)?;
        out.set_item("sigma_measured", g.1.sigma_measured)?;
        out.set_item("r_squared", g.1.r_squared)?;
        out.set_item("steps", g.1.steps)?;
        Ok(out.into_any().unbind())
    }
}

#[pymodule]
fn pysktshadow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(h_eps, m)?)?;
    m.add_function(wrap_pyfunction!(hj, m)?)?;
    m.add_function(wrap_pyfunction!(reduce, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
