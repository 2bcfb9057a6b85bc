//! Python bindings: case loading, power flow, simulation and experiments.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dse_core::dynamics::{FaultScenario, Study};
use dse_core::{cases, harness, powerflow, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Parse(_) | Error::Validation(_) | Error::InvalidArgument(_) | Error::Dimension(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A validated network case.
#[pyclass(name = "Case", module = "dse", skip_from_py_object)]
#[derive(Clone)]
struct PyCase {
    inner: cases::NetworkCase,
}

#[pymethods]
impl PyCase {
    /// Bundled case by name (`wecc9`, `ne39`).
    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        cases::bundled(name).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        cases::load_case(path).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        cases::NetworkCase::from_toml_str(text)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn n_buses(&self) -> usize {
        self.inner.n_buses()
    }

    #[getter]
    fn n_machines(&self) -> usize {
        self.inner.n_machines()
    }

    #[getter]
    fn frequency(&self) -> f64 {
        self.inner.frequency
    }

    /// Inertia constants in machine order.
    #[getter]
    fn inertia(&self) -> Vec<f64> {
        self.inner.machines.iter().map(|m| m.h).collect()
    }

    /// `(MW, MVar)`.
    fn total_load(&self) -> (f64, f64) {
        self.inner.total_load()
    }

    fn __repr__(&self) -> String {
        format!(
            "Case(name={:?}, buses={}, machines={})",
            self.inner.name,
            self.inner.n_buses(),
            self.inner.n_machines()
        )
    }
}

#[pyclass(name = "PowerFlow", module = "dse", get_all)]
struct PyPowerFlow {
    v_mag: Vec<f64>,
    v_ang: Vec<f64>,
    p_inj: Vec<f64>,
    q_inj: Vec<f64>,
    iterations: usize,
    max_mismatch: f64,
}

#[pyfunction]
#[pyo3(signature = (case, tol = powerflow::DEFAULT_TOL, max_iter = powerflow::DEFAULT_MAX_ITER))]
fn solve_power_flow(case: &PyCase, tol: f64, max_iter: usize) -> PyResult<PyPowerFlow> {
    let pf = powerflow::solve_power_flow(&case.inner, tol, max_iter).map_err(to_py)?;
    Ok(PyPowerFlow {
        v_mag: pf.v_mag,
        v_ang: pf.v_ang,
        p_inj: pf.p_inj,
        q_inj: pf.q_inj,
        iterations: pf.iterations,
        max_mismatch: pf.max_mismatch,
    })
}

/// Ground-truth trajectory as a dict of `t`, `delta`, `omega`, `regime`.
#[pyfunction]
#[pyo3(signature = (case, fault_bus, cleared_line, t_fault = 1.0, clearing_cycles = 2.0, t_end = 10.0, dt = 0.01, substeps = 10))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    case: &PyCase,
    fault_bus: usize,
    cleared_line: (usize, usize),
    t_fault: f64,
    clearing_cycles: f64,
    t_end: f64,
    dt: f64,
    substeps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let scenario = FaultScenario {
        fault_bus,
        t_fault,
        clearing_cycles,
        cleared_line,
        t_end,
        dt,
    };
    let traj = py
        .detach(|| {
            let pf = powerflow::solve_power_flow(&case.inner, powerflow::DEFAULT_TOL, powerflow::DEFAULT_MAX_ITER)?;
            Study::prepare(&case.inner, &pf, &scenario)?.simulate(substeps)
        })
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("t", &traj.times)?;
    out.set_item("delta", traj.states.iter().map(|s| s.delta.clone()).collect::<Vec<_>>())?;
    out.set_item("omega", traj.states.iter().map(|s| s.omega.clone()).collect::<Vec<_>>())?;
    out.set_item("regime", traj.regime.iter().map(|r| r.as_str()).collect::<Vec<_>>())?;
    Ok(out)
}

/// Runs an experiment from a preset name or config path and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (config, seed = None, out = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    seed: Option<u64>,
    out: Option<std::path::PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = harness::resolve_config(config).map_err(to_py)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if out.is_some() {
        cfg.out = out;
    }
    let report = py.detach(|| harness::run_experiment(&cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("case", &report.case)?;
    d.set_item("n_machines", report.n_machines)?;
    d.set_item("t_clear", report.t_clear)?;
    d.set_item("static_post_rmse_delta", &report.static_post_rmse_delta)?;
    d.set_item("wall_seconds", report.wall_seconds)?;
    for f in &report.filters {
        let fd = PyDict::new(py);
        fd.set_item("rmse_delta", &f.rmse_delta)?;
        fd.set_item("rmse_omega", &f.rmse_omega)?;
        fd.set_item("post_rmse_delta", &f.post_rmse_delta)?;
        fd.set_item("post_rmse_omega", &f.post_rmse_omega)?;
        fd.set_item("post_max_abs_delta", &f.post_max_abs_delta)?;
        fd.set_item("post_max_abs_omega", &f.post_max_abs_omega)?;
        fd.set_item("seconds", f.seconds)?;
        d.set_item(f.kind.as_str(), fd)?;
    }
    Ok(d)
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    harness::PRESETS.to_vec()
}

#[pymodule]
fn dse(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCase>()?;
    m.add_class::<PyPowerFlow>()?;
    m.add_function(wrap_pyfunction!(solve_power_flow, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    Ok(())
}
