use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::cbdi::boundary_params::LimitEstimate;
use ::cbdi::classifier::{BoundaryReport, ClassifierConfig};
use ::cbdi::cli_io::{self, MechanismSpec};
use ::cbdi::duality_lab::{self, DualityConfig, DualityGrid};
use ::cbdi::simulator::{self, NoiseBundle, SimConfig, State};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A branching or interaction mechanism.
#[pyclass(name = "Mechanism", module = "cbdi", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMechanism {
    inner: ::cbdi::Mechanism,
    spec: MechanismSpec,
}

impl PyMechanism {
    fn from_spec(spec: MechanismSpec) -> PyResult<Self> {
        let inner = spec.build("mechanism").map_err(value_err)?;
        Ok(PyMechanism { inner, spec })
    }
}

#[pymethods]
impl PyMechanism {
    /// Σ coef·x^index from `[(coef, index), ...]`.
    #[staticmethod]
    fn power_sum(terms: Vec<(f64, f64)>) -> PyResult<Self> {
        Self::from_spec(MechanismSpec::PowerSum { terms: terms.into_iter().map(|(c, i)| [c, i]).collect() })
    }

    #[staticmethod]
    fn zero() -> PyResult<Self> {
        Self::from_spec(MechanismSpec::Zero)
    }

    /// Parses the `[psi]` table grammar, e.g. `family = "levy"` with `jumps = {...}`.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Self::from_spec(toml::from_str(text).map_err(value_err)?)
    }

    fn to_toml(&self) -> String {
        toml::to_string(&self.spec).expect("mechanism spec serializes")
    }

    fn __call__(&self, x: f64) -> f64 {
        self.inner.evaluate(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.inner.derivative(x)
    }

    /// (Σ(x), Φ(x)) with Ψ = Σ − Φ.
    fn parts(&self, x: f64) -> (f64, f64) {
        let d = self.inner.decomposition();
        (d.sigma.evaluate(x), d.phi.evaluate(x))
    }

    /// Solution of ∂u/∂t = −Ψ(u), u(0) = y.
    fn flow(&self, y: f64, t: f64) -> f64 {
        duality_lab::ode_flow(&self.inner, y, t)
    }

    fn __repr__(&self) -> String {
        format!("Mechanism({:?})", self.spec)
    }
}

fn sim_config(n_paths: usize, dt: f64, epsilon: f64, horizon: f64, seed: u64) -> PyResult<SimConfig> {
    let cfg = SimConfig { n_paths, dt, epsilon, horizon, seed, ..SimConfig::default() };
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

fn estimate_dict<'py>(py: Python<'py>, e: &Option<LimitEstimate>) -> PyResult<Option<Bound<'py, PyDict>>> {
    let Some(e) = e else { return Ok(None) };
    let d = PyDict::new(py);
    d.set_item("lower", e.liminf_est)?;
    d.set_item("upper", e.limsup_est)?;
    d.set_item("converged", e.converged)?;
    d.set_item("rule", &e.rule)?;
    Ok(Some(d))
}

fn report_dict<'py>(py: Python<'py>, r: &BoundaryReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("verdict", r.verdict.to_string())?;
    d.set_item("accessible", r.accessible)?;
    d.set_item("absorbing", r.absorbing)?;
    d.set_item("theta", estimate_dict(py, &r.theta)?)?;
    d.set_item("rho", estimate_dict(py, &r.rho)?)?;
    d.set_item("regular_for_itself", format!("{:?}", r.regular_for_itself))?;
    d.set_item("non_sticky", format!("{:?}", r.non_sticky))?;
    d.set_item("rationale", r.rationale.clone())?;
    d.set_item("missing", r.missing.clone())?;
    Ok(d)
}

/// Verdicts for ∞ of CBDI(Ψ, Ψ̂) and 0 of CBDI(Ψ̂, Ψ).
#[pyfunction]
#[pyo3(signature = (psi, psi_hat, tau = 0.05))]
fn classify<'py>(
    py: Python<'py>,
    psi: &PyMechanism,
    psi_hat: &PyMechanism,
    tau: f64,
) -> PyResult<(Bound<'py, PyDict>, Bound<'py, PyDict>)> {
    let cfg = ClassifierConfig { tau, ..ClassifierConfig::default() };
    let (inf, zero) = py.detach(|| cli_io::classify_pair(&psi.inner, &psi_hat.inner, &cfg));
    Ok((report_dict(py, &inf)?, report_dict(py, &zero)?))
}

/// One path of the minimal process; returns (times, states) with ∞ as `inf`.
#[pyfunction]
#[pyo3(signature = (psi, psi_hat, x0, horizon = 1.0, dt = 1e-3, epsilon = 1e-3, seed = 0, path_index = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate_path(
    py: Python<'_>,
    psi: &PyMechanism,
    psi_hat: &PyMechanism,
    x0: f64,
    horizon: f64,
    dt: f64,
    epsilon: f64,
    seed: u64,
    path_index: u64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let cfg = sim_config(1, dt, epsilon, horizon, seed)?;
    let path = py
        .detach(|| simulator::simulate_minimal(&psi.inner, &psi_hat.inner, x0, &cfg, &NoiseBundle::new(seed, path_index)))
        .map_err(runtime_err)?;
    Ok((path.times, path.states.iter().map(State::as_f64).collect()))
}

/// Monte Carlo E_x[exp(−y X_t)] and its standard error.
#[pyfunction]
#[pyo3(signature = (psi, psi_hat, x, y, t, n_paths = 10000, dt = 1e-3, epsilon = 1e-3, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn laplace(
    py: Python<'_>,
    psi: &PyMechanism,
    psi_hat: &PyMechanism,
    x: f64,
    y: f64,
    t: f64,
    n_paths: usize,
    dt: f64,
    epsilon: f64,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let cfg = sim_config(n_paths, dt, epsilon, t, seed)?;
    let e = py
        .detach(|| simulator::estimate_laplace(&psi.inner, &psi_hat.inner, x, y, t, &cfg))
        .map_err(runtime_err)?;
    Ok((e.estimate, e.standard_error))
}

/// E_x[exp(−y X_t)] for the pure branching process with mechanism `psi`.
#[pyfunction]
fn cb_semigroup(psi: &PyMechanism, x: f64, y: f64, t: f64) -> f64 {
    duality_lab::cb_semigroup(&psi.inner, x, y, t)
}

/// Checks E_x[e^{−X_t y}] = E_y[e^{−x Y_t}] on a grid; returns (pass_fraction, cells).
#[pyfunction]
#[pyo3(signature = (psi, psi_hat, xs = vec![0.5, 1.0, 2.0], ys = vec![0.5, 1.0, 2.0], ts = vec![0.25, 1.0], n_paths = 10000, dt = 1e-3, epsilon = 1e-3, seed = 0, k = 3.0))]
#[allow(clippy::too_many_arguments)]
fn duality_check<'py>(
    py: Python<'py>,
    psi: &PyMechanism,
    psi_hat: &PyMechanism,
    xs: Vec<f64>,
    ys: Vec<f64>,
    ts: Vec<f64>,
    n_paths: usize,
    dt: f64,
    epsilon: f64,
    seed: u64,
    k: f64,
) -> PyResult<(f64, Vec<Bound<'py, PyDict>>)> {
    let horizon = ts.iter().copied().fold(0.0, f64::max);
    let cfg = DualityConfig { sim: sim_config(n_paths, dt, epsilon, horizon, seed)?, k, recheck: false };
    let grid = DualityGrid { xs, ys, ts };
    let r = py
        .detach(|| duality_lab::duality_check(&psi.inner, &psi_hat.inner, &grid, &cfg))
        .map_err(runtime_err)?;
    let cells = r
        .cells
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("x", c.x)?;
            d.set_item("y", c.y)?;
            d.set_item("t", c.t)?;
            d.set_item("lhs", c.lhs)?;
            d.set_item("lhs_se", c.lhs_se)?;
            d.set_item("rhs", c.rhs)?;
            d.set_item("rhs_se", c.rhs_se)?;
            d.set_item("pass", c.pass)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((r.pass_fraction, cells))
}

/// Runs a CLI command on a TOML config; returns (csv, exit_code).
#[pyfunction]
fn run_command(py: Python<'_>, command: &str, config: &str) -> PyResult<(String, i32)> {
    let cfg = cli_io::parse_config(config).map_err(value_err)?;
    let f = match command {
        "classify" => cli_io::cmd_classify,
        "params" => cli_io::cmd_params,
        "phase" => cli_io::cmd_phase,
        "simulate" => cli_io::cmd_simulate,
        "duality" => cli_io::cmd_duality,
        other => return Err(value_err(format!("unknown command `{other}`"))),
    };
    let o = py.detach(|| f(&cfg)).map_err(runtime_err)?;
    Ok((o.csv, o.exit_code))
}

#[pymodule]
fn cbdi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMechanism>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_path, m)?)?;
    m.add_function(wrap_pyfunction!(laplace, m)?)?;
    m.add_function(wrap_pyfunction!(cb_semigroup, m)?)?;
    m.add_function(wrap_pyfunction!(duality_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    Ok(())
}
