//! Python bindings for `kdv_control`.  States are plain lists of floats.

use kdv_control::carleman::{construct_psi, SAMPLER_POINTS};
use kdv_control::hum::{self, ControlProblem, ControlResult, Mode};
use kdv_control::kdv_solve::{solve_forward, solve_nonlinear, Forcing, InnerConfig, Potential};
use kdv_control::nonlinear_ctrl::{null_control_to_trajectory, PicardConfig};
use kdv_control::{config, regional, scenario, suite, BcTag, KdvError};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::collections::BTreeMap;
use std::path::Path;

fn err(e: KdvError) -> PyErr {
    match e {
        KdvError::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Mesh", frozen, from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: kdv_control::Mesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    #[pyo3(signature = (length, horizon, n, m))]
    fn new(length: f64, horizon: f64, n: usize, m: usize) -> PyResult<Self> {
        Ok(PyMesh { inner: kdv_control::Mesh::new(length, horizon, n, m).map_err(err)? })
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.l
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.t
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    /// Interior nodes.
    fn nodes(&self) -> Vec<f64> {
        self.inner.nodes()
    }

    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    fn __repr__(&self) -> String {
        let m = &self.inner;
        format!("Mesh(length={}, horizon={}, n={}, m={})", m.l, m.t, m.n, m.m)
    }
}

#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory {
    #[pyo3(get)]
    times: Vec<f64>,
    #[pyo3(get)]
    values: Vec<Vec<f64>>,
    #[pyo3(get)]
    left_trace: Vec<f64>,
    #[pyo3(get)]
    right_trace: Vec<f64>,
}

#[pymethods]
impl PyTrajectory {
    fn terminal(&self) -> Vec<f64> {
        self.values.last().cloned().unwrap_or_default()
    }
}

impl From<kdv_control::Trajectory> for PyTrajectory {
    fn from(t: kdv_control::Trajectory) -> Self {
        PyTrajectory { times: t.mesh.times(), values: t.values, left_trace: t.left_trace, right_trace: t.right_trace }
    }
}

#[pyclass(name = "Control", frozen)]
struct PyControl {
    #[pyo3(get)]
    terminal_residual: f64,
    #[pyo3(get)]
    relative_residual: f64,
    #[pyo3(get)]
    cg_iters: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    cost: f64,
    #[pyo3(get)]
    ritz_min: f64,
    #[pyo3(get)]
    ritz_max: f64,
    /// Distributed forcing, one row per time interval.
    #[pyo3(get)]
    forcing: Vec<Vec<f64>>,
    #[pyo3(get)]
    certificate: BTreeMap<String, f64>,
    #[pyo3(get)]
    warnings: Vec<String>,
    trajectory: kdv_control::Trajectory,
}

#[pymethods]
impl PyControl {
    fn trajectory(&self) -> PyTrajectory {
        self.trajectory.clone().into()
    }
}

impl PyControl {
    fn new(r: ControlResult) -> PyResult<Self> {
        let mesh = &r.trajectory.mesh;
        let op = kdv_control::build_operator(mesh, BcTag::Forward).map_err(err)?;
        Ok(PyControl {
            terminal_residual: r.terminal_residual,
            relative_residual: r.relative_residual,
            cg_iters: r.cg_iters,
            converged: r.converged,
            cost: r.cost,
            ritz_min: r.ritz_min,
            ritz_max: r.ritz_max,
            forcing: r.control.to_distributed(mesh, &op),
            certificate: r.certificate,
            warnings: r.warnings,
            trajectory: r.trajectory,
        })
    }
}

/// Free evolution from `u0`, linear unless `nonlinear` is set.
#[pyfunction]
#[pyo3(signature = (mesh, u0, nonlinear = false))]
fn simulate(py: Python<'_>, mesh: &PyMesh, u0: Vec<f64>, nonlinear: bool) -> PyResult<PyTrajectory> {
    let mesh = mesh.inner.clone();
    let t = py
        .detach(|| {
            let op = kdv_control::build_operator(&mesh, BcTag::Forward)?;
            if nonlinear {
                solve_nonlinear(&mesh, &op, &u0, &Forcing::Zero, InnerConfig::default()).map(|r| r.trajectory)
            } else {
                solve_forward(&mesh, &op, &u0, &Forcing::Zero, &Potential::Zero)
            }
        })
        .map_err(err)?;
    Ok(t.into())
}

/// Linear distributed null control on `omega`.
#[pyfunction]
#[pyo3(signature = (mesh, u0, omega = None, eps = 1e-8, cg_tol = 1e-10, cg_max = 500))]
fn null_control(
    py: Python<'_>,
    mesh: &PyMesh,
    u0: Vec<f64>,
    omega: Option<(f64, f64)>,
    eps: f64,
    cg_tol: f64,
    cg_max: usize,
) -> PyResult<PyControl> {
    let mut prob = ControlProblem::new(mesh.inner.clone(), Mode::DistributedNull, u0);
    if let Some(w) = omega {
        prob.omega = w;
    }
    prob.tikhonov_eps = eps;
    prob.cg_tol = cg_tol;
    prob.cg_max = cg_max;
    PyControl::new(py.detach(|| hum::synthesize_null_control(&prob)).map_err(err)?)
}

/// Linear control `u0 -> u1` with forcing `(rho h)_x` near the right end.
#[pyfunction]
#[pyo3(signature = (mesh, u0, u1, nu = None))]
fn weighted_exact_control(
    py: Python<'_>,
    mesh: &PyMesh,
    u0: Vec<f64>,
    u1: Vec<f64>,
    nu: Option<f64>,
) -> PyResult<PyControl> {
    let mut prob = ControlProblem::new(mesh.inner.clone(), Mode::WeightedExact, u0);
    prob.u1 = Some(u1);
    if let Some(nu) = nu {
        prob.nu = nu;
    }
    PyControl::new(py.detach(|| hum::synthesize_weighted_exact_control(&prob)).map_err(err)?)
}

/// Nonlinear null control onto the free trajectory from `u0bar`.
/// Returns the control and the outer iteration count.
#[pyfunction]
#[pyo3(signature = (mesh, u0bar, u0, omega = None))]
fn null_control_nonlinear(
    py: Python<'_>,
    mesh: &PyMesh,
    u0bar: Vec<f64>,
    u0: Vec<f64>,
    omega: Option<(f64, f64)>,
) -> PyResult<(PyControl, usize)> {
    let m = mesh.inner.clone();
    let w = omega.unwrap_or((0.3 * m.l, 0.6 * m.l));
    let out = py.detach(|| null_control_to_trajectory(&m, &u0bar, &u0, w, &PicardConfig::default())).map_err(err)?;
    let iters = out.outer_iters();
    Ok((PyControl::new(out.result)?, iters))
}

#[pyfunction]
fn critical_lengths(kmax: usize) -> PyResult<Vec<f64>> {
    Ok(regional::critical_lengths(kmax).map_err(err)?.lengths)
}

#[pyfunction]
fn nearest_noncritical(length: f64, kmax: usize, margin: f64) -> PyResult<f64> {
    let set = regional::critical_lengths(kmax).map_err(err)?;
    regional::nearest_noncritical(length, &set, margin).map_err(err)
}

/// Smallest Ritz value of the boundary Gramian at domain length `length`.
#[pyfunction]
#[pyo3(signature = (length, horizon = 1.0, n = 128, m = 256))]
fn boundary_min_ritz(py: Python<'_>, length: f64, horizon: f64, n: usize, m: usize) -> PyResult<f64> {
    py.detach(|| regional::boundary_min_ritz(length, horizon, n, m)).map_err(err)
}

/// Violations of the weight conditions at the sampler's default resolution.
#[pyfunction]
fn psi_violations(length: f64, l1: f64, l2: f64) -> PyResult<usize> {
    Ok(construct_psi(length, l1, l2).map_err(err)?.sample(SAMPLER_POINTS).total())
}

/// Runs a scenario file; returns `(converged, summary)`.
#[pyfunction]
#[pyo3(signature = (config_path, out, seed = None))]
fn run_scenario(
    py: Python<'_>,
    config_path: &str,
    out: &str,
    seed: Option<u64>,
) -> PyResult<(bool, BTreeMap<String, String>)> {
    let path = Path::new(config_path);
    let cfg = config::load(path).map_err(err)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let r = py.detach(|| scenario::run(&cfg, &base, Path::new(out), seed)).map_err(err)?;
    Ok((r.converged, r.summary))
}

/// Acceptance checks as `(id, name, passed, detail)`.
#[pyfunction]
#[pyo3(signature = (seed = 1, ids = None))]
fn selftest(py: Python<'_>, seed: u64, ids: Option<Vec<u8>>) -> Vec<(u8, String, bool, String)> {
    let outcomes = py.detach(|| match ids {
        Some(ids) => ids.into_iter().map(|id| suite::run_criterion(id, seed)).collect(),
        None => suite::run_suite(seed),
    });
    outcomes.into_iter().map(|o| (o.id, o.name.to_string(), o.pass, o.detail)).collect()
}

#[pymodule]
fn pykdv(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyControl>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(null_control, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_exact_control, m)?)?;
    m.add_function(wrap_pyfunction!(null_control_nonlinear, m)?)?;
    m.add_function(wrap_pyfunction!(critical_lengths, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_noncritical, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_min_ritz, m)?)?;
    m.add_function(wrap_pyfunction!(psi_violations, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
