//! Python bindings: `import arw`.
//!
//! Configurations and stacks are wrapped as classes; estimator reports come
//! back as plain dicts with the same fields as the JSON the CLI writes.

use arw_core::engine::{self, OrderPolicy, Snapshot, StabilizationMode};
use arw_core::estimators::{self, Cell, EstimatorError, InitialLaw, TrialPlan};
use arw_core::rng::{derive_seed, streams, SplitMix64};
use arw_core::verify::{run_suite, Suite, VerifyOptions};
use arw_core::walks::{self, WalksError, DEFAULT_ESCAPE_RADIUS, DEFAULT_MAX_STEPS};
use arw_core::{make_box, EngineError, SiteState};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn engine_err(e: EngineError) -> PyErr {
    match e {
        EngineError::Lattice(_) | EngineError::DimensionMismatch { .. } => value_err(e),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn estimator_err(e: EstimatorError) -> PyErr {
    match e {
        EstimatorError::Engine(e) => engine_err(e),
        e => value_err(e),
    }
}

fn walks_err(e: WalksError) -> PyErr {
    value_err(e)
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn site(d: usize, coords: Vec<i64>) -> PyResult<arw_core::Site> {
    if coords.len() != d {
        return Err(value_err(format!("site has {} coordinates, expected {d}", coords.len())));
    }
    Ok(arw_core::Site::new(coords))
}

fn state_from_code(code: i64) -> PyResult<SiteState> {
    SiteState::from_code(code).ok_or_else(|| value_err(format!("invalid site code {code}; use -1 for sleeping or a count >= 0")))
}

fn mode(name: &str, d: usize) -> PyResult<StabilizationMode> {
    match name {
        "true" => Ok(StabilizationMode::True),
        "weak" => Ok(StabilizationMode::weak_origin(d)),
        "strong" => Ok(StabilizationMode::strong_origin(d)),
        other => Err(value_err(format!("unknown mode {other:?}; expected true, weak or strong"))),
    }
}

fn law(text: &str, d: usize) -> PyResult<InitialLaw> {
    text.parse::<InitialLaw>().map(|l| l.for_dim(d)).map_err(value_err)
}

/// Sleep rate and dimension: `p_sleep = λ / (1 + λ)`.
#[pyclass(frozen, skip_from_py_object, name = "Params")]
#[derive(Clone)]
struct PyParams(arw_core::Params);

#[pymethods]
impl PyParams {
    #[new]
    fn new(d: usize, lambda_: f64) -> PyResult<Self> {
        arw_core::Params::new(d, lambda_).map(PyParams).map_err(value_err)
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.0.lambda()
    }

    #[getter]
    fn p_sleep(&self) -> f64 {
        self.0.p_sleep()
    }

    #[getter]
    fn p_jump(&self) -> f64 {
        self.0.p_jump()
    }

    fn __repr__(&self) -> String {
        format!("Params(d={}, lambda_={})", self.0.dim(), self.0.lambda())
    }
}

/// Instruction stacks: a pure function of `(seed, site, k)`.
#[pyclass(frozen, name = "StackSource")]
struct PyStackSource(arw_core::StackSource);

#[pymethods]
impl PyStackSource {
    #[new]
    fn new(seed: u64, params: &PyParams) -> Self {
        PyStackSource(arw_core::StackSource::new(seed, params.0))
    }

    /// The `k`-th instruction at `site` (0-based): `"sleep"` or a direction
    /// index in `0..2d`.
    fn instruction(&self, py: Python<'_>, site: Vec<i64>, k: u64) -> PyResult<Py<PyAny>> {
        let x = self::site(self.0.params().dim(), site)?;
        to_py(py, &self.0.instruction(&x, k))
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }
}

/// Particle configuration on the box `[-n, n]^d` with its odometer.
///
/// Site codes: `-1` one sleeping particle, `k >= 0` that many active ones.
#[pyclass(skip_from_py_object, name = "Configuration")]
#[derive(Clone)]
struct PyConfiguration(arw_core::Configuration);

#[pymethods]
impl PyConfiguration {
    #[staticmethod]
    fn empty(d: usize, n: usize) -> PyResult<Self> {
        let lattice = make_box(d, n).map_err(value_err)?;
        Ok(PyConfiguration(arw_core::Configuration::empty(lattice)))
    }

    #[staticmethod]
    fn delta_origin(d: usize, n: usize) -> PyResult<Self> {
        let lattice = make_box(d, n).map_err(value_err)?;
        Ok(PyConfiguration(arw_core::Configuration::delta_origin(lattice)))
    }

    /// Draws from an initial law such as `"poisson:0.5"` with the same seed
    /// derivation as `arw stabilize`.
    #[staticmethod]
    fn sample(d: usize, n: usize, law: &str, seed: u64) -> PyResult<Self> {
        let lattice = make_box(d, n).map_err(value_err)?;
        let law = self::law(law, d)?;
        law.validate().map_err(estimator_err)?;
        law.check_fits(&lattice).map_err(estimator_err)?;
        let mut rng = SplitMix64::new(derive_seed(seed, streams::LAW, 0));
        Ok(PyConfiguration(law.sample(&lattice, &mut rng)))
    }

    #[staticmethod]
    fn from_snapshot(text: &str) -> PyResult<Self> {
        let snap = Snapshot::from_json(text).map_err(value_err)?;
        snap.to_configuration().map(PyConfiguration).map_err(value_err)
    }

    #[pyo3(signature = (seed = None))]
    fn to_snapshot(&self, seed: Option<u64>) -> String {
        Snapshot::from_configuration(&self.0, seed).to_json()
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.lattice().dim()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.lattice().radius()
    }

    #[getter]
    fn killed(&self) -> u64 {
        self.0.killed()
    }

    #[getter]
    fn particles(&self) -> u64 {
        self.0.particles()
    }

    fn state(&self, site: Vec<i64>) -> PyResult<i64> {
        let x = self::site(self.d(), site)?;
        self.0
            .state(&x)
            .map(SiteState::code)
            .ok_or_else(|| value_err("site outside the box"))
    }

    fn set_state(&mut self, site: Vec<i64>, code: i64) -> PyResult<()> {
        let x = self::site(self.d(), site)?;
        self.0.set_state(&x, state_from_code(code)?).map_err(engine_err)
    }

    fn add_active(&mut self, site: Vec<i64>, count: u32) -> PyResult<()> {
        let x = self::site(self.d(), site)?;
        self.0.add_active(&x, count).map_err(engine_err)
    }

    /// Site codes in dense order (last coordinate fastest).
    fn codes(&self) -> Vec<i64> {
        self.0.states().iter().map(|s| s.code()).collect()
    }

    fn odometer(&self) -> Vec<u64> {
        self.0.odometer().as_slice().to_vec()
    }

    fn is_stable(&self, mode: &str) -> PyResult<bool> {
        let m = self::mode(mode, self.d())?;
        for x in self.0.lattice().sites() {
            if !engine::is_stable(&self.0, &x, &m).map_err(engine_err)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Stabilizes in place and returns the number of topplings.
    #[pyo3(signature = (stacks, mode = "true"))]
    fn stabilize(&mut self, py: Python<'_>, stacks: &PyStackSource, mode: &str) -> PyResult<u64> {
        let m = self::mode(mode, self.d())?;
        let src = &stacks.0;
        let cfg = &mut self.0;
        py.detach(|| engine::stabilize(cfg, src, &m, OrderPolicy::Fifo))
            .map(|s| s.topplings)
            .map_err(engine_err)
    }

    fn copy(&self) -> Self {
        self.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Configuration(d={}, n={}, particles={}, killed={})",
            self.d(),
            self.n(),
            self.0.particles(),
            self.0.killed()
        )
    }
}

/// Strong stabilization with respect to the origin by repeated jump-outs.
/// Returns `(record, final_configuration)`; the record holds `ch`, `ach`,
/// `sleep_trials` and `first_success_iteration`.
#[pyfunction]
fn strong_stabilize_iterative(
    py: Python<'_>,
    config: &PyConfiguration,
    stacks: &PyStackSource,
) -> PyResult<(Py<PyAny>, PyConfiguration)> {
    let rec = engine::strong_stabilize_iterative(&config.0, &stacks.0).map_err(engine_err)?;
    let summary = serde_json::json!({
        "ch": rec.ch,
        "ach": rec.ach,
        "sleep_trials": rec.sleep_trials,
        "first_success_iteration": rec.first_success_iteration,
    });
    Ok((to_py(py, &summary)?, PyConfiguration(rec.final_config)))
}

fn cell(d: usize, n: usize, lambda_: f64, law: &str) -> PyResult<Cell> {
    let params = arw_core::Params::new(d, lambda_).map_err(value_err)?;
    Cell::new(n, params, self::law(law, d)?).map_err(estimator_err)
}

/// Frequency of an occupied origin after true stabilization.
#[pyfunction]
#[pyo3(signature = (d, n, lambda_ = 1.0, law = "delta", trials = 10_000, seed = 0))]
fn estimate_occupation(
    py: Python<'_>,
    d: usize,
    n: usize,
    lambda_: f64,
    law: &str,
    trials: u64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let cell = cell(d, n, lambda_, law)?;
    let r = py
        .detach(|| estimators::estimate_occupation(&cell, &TrialPlan::new(trials, seed)))
        .map_err(estimator_err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (d, n, lambda_ = 1.0, law = "delta", trials = 10_000, seed = 0, k_max = 4))]
#[allow(clippy::too_many_arguments)]
fn chance_distribution(
    py: Python<'_>,
    d: usize,
    n: usize,
    lambda_: f64,
    law: &str,
    trials: u64,
    seed: u64,
    k_max: u64,
) -> PyResult<Py<PyAny>> {
    let cell = cell(d, n, lambda_, law)?;
    let r = py
        .detach(|| estimators::chance_distribution(&cell, &TrialPlan::new(trials, seed), k_max))
        .map_err(estimator_err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (d, n, lambda_ = 1.0, law = "delta", trials = 10_000, seed = 0))]
fn verify_identity(
    py: Python<'_>,
    d: usize,
    n: usize,
    lambda_: f64,
    law: &str,
    trials: u64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let cell = cell(d, n, lambda_, law)?;
    let r = py
        .detach(|| estimators::verify_identity(&cell, &TrialPlan::new(trials, seed)))
        .map_err(estimator_err)?;
    to_py(py, &r)
}

/// Mean number of returns to the origin of simple random walk on `Z^d`.
#[pyfunction]
#[pyo3(signature = (d, trials = 10_000, escape_radius = DEFAULT_ESCAPE_RADIUS, max_steps = DEFAULT_MAX_STEPS, seed = 0, allow_censoring = false))]
fn expected_returns(
    py: Python<'_>,
    d: usize,
    trials: u64,
    escape_radius: u64,
    max_steps: u64,
    seed: u64,
    allow_censoring: bool,
) -> PyResult<Py<PyAny>> {
    let r = py
        .detach(|| walks::expected_returns(d, trials, escape_radius, max_steps, seed, allow_censoring))
        .map_err(walks_err)?;
    to_py(py, &r)
}

/// Critical density bounds. With `walks > 0` and `d >= 3` the upper bound
/// uses a Monte Carlo `E[R]`, otherwise the `1 / 2d` surrogate.
#[pyfunction]
#[pyo3(signature = (d, lambda_ = 1.0, walks = 0, escape_radius = 100, seed = 0))]
fn bounds(py: Python<'_>, d: usize, lambda_: f64, walks: u64, escape_radius: u64, seed: u64) -> PyResult<Py<PyAny>> {
    let params = arw_core::Params::new(d, lambda_).map_err(value_err)?;
    let returns = if walks > 0 && d >= 3 {
        Some(
            py.detach(|| walks::expected_returns(d, walks, escape_radius, DEFAULT_MAX_STEPS, seed, false))
                .map_err(walks_err)?,
        )
    } else {
        None
    };
    to_py(py, &estimators::bounds_report(params, returns.as_ref()))
}

/// Runs a named verification suite with its default options and returns
/// the check reports.
#[pyfunction]
#[pyo3(signature = (suite, seed = 0))]
fn verify(py: Python<'_>, suite: &str, seed: u64) -> PyResult<Py<PyAny>> {
    let suite: Suite = suite.parse().map_err(value_err)?;
    let opts = VerifyOptions {
        master_seed: seed,
        ..Default::default()
    };
    let reports = py.detach(|| run_suite(suite, &opts)).map_err(estimator_err)?;
    to_py(py, &reports)
}

#[pymodule]
fn arw(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyStackSource>()?;
    m.add_class::<PyConfiguration>()?;
    m.add_function(wrap_pyfunction!(strong_stabilize_iterative, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_occupation, m)?)?;
    m.add_function(wrap_pyfunction!(chance_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(verify_identity, m)?)?;
    m.add_function(wrap_pyfunction!(expected_returns, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
