//! Python bindings for `modeflux`.
//!
//! A [`Config`] wraps a parsed run configuration and exposes the layout,
//! coupling sets, transport and Monte Carlo runs. Structured results are
//! returned as plain Python dictionaries and lists; heavy computations
//! release the GIL.

use std::path::PathBuf;

use modeflux::cli::{montecarlo_run, transport_ledger};
use modeflux::config::{config_base, load_config, parse_config, RunConfig};
use modeflux::coupling::{coupling_set, length_scales, CouplingSet};
use modeflux::geometry::mode_count_for_width;
use modeflux::transport::{SectorRecord, Side};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde_json::{json, Value};

create_exception!(pymodeflux, ModefluxError, PyException, "Error raised by the modeflux core; `args[0]` is the message, `code` the error kind.");

fn to_py_err(e: modeflux::Error) -> PyErr {
    Python::attach(|py| {
        let err = ModefluxError::new_err(e.to_string());
        let _ = err.value(py).setattr("code", e.code());
        err
    })
}

/// Convert a JSON value into the equivalent Python object.
fn to_python(py: Python<'_>, value: &Value) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| ModefluxError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn sector_json(r: &SectorRecord) -> Value {
    json!({
        "side": if r.side == Side::Left { "left" } else { "right" },
        "index": r.index,
        "z_left": r.z_left,
        "z_right": r.z_right,
        "n_modes": r.n_modes,
        "coupled_interval": r.coupled_interval,
        "transmitted_modes": r.transmitted_modes,
        "z": r.states.iter().map(|s| s.z).collect::<Vec<_>>(),
        "mean_powers": r.states.iter().map(|s| s.mean_powers.clone()).collect::<Vec<_>>(),
        "mean_amplitudes": r.states.iter().map(|s| s.mean_amps.iter().map(|b| (b.re, b.im)).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "second_moments": r.states.iter().map(|s| matrix_rows(&s.second_moments)).collect::<Vec<_>>(),
        "transmitted_mean": r.transmitted_mean(),
        "transmitted_std": r.transmitted_std(),
    })
}

/// A validated run configuration.
#[pyclass(module = "pymodeflux", frozen)]
struct Config {
    cfg: RunConfig,
    base: PathBuf,
}

#[pymethods]
impl Config {
    /// Parse and validate configuration text; relative table paths resolve
    /// against `base` (default: the current directory).
    #[staticmethod]
    #[pyo3(signature = (text, base = None))]
    fn from_text(text: &str, base: Option<PathBuf>) -> PyResult<Self> {
        let cfg = parse_config(text).map_err(to_py_err)?;
        cfg.validate().map_err(to_py_err)?;
        Ok(Self { cfg, base: base.unwrap_or_else(|| PathBuf::from(".")) })
    }

    /// Load and validate a configuration file.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let cfg = load_config(&path).map_err(to_py_err)?;
        cfg.validate().map_err(to_py_err)?;
        Ok(Self { cfg, base: config_base(&path) })
    }

    /// Canonical configuration text (as recorded in run manifests).
    fn to_text(&self) -> PyResult<String> {
        self.cfg.to_text().map_err(to_py_err)
    }

    #[getter]
    fn k(&self) -> f64 {
        self.cfg.k()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.cfg.sigma()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.cfg.epsilon()
    }

    #[getter]
    fn correlation_length(&self) -> f64 {
        self.cfg.correlation_length()
    }

    /// Slow length L = correlation length / epsilon.
    #[getter]
    fn slow_length(&self) -> f64 {
        self.cfg.slow_length()
    }

    /// Half-width of the excluded interval around each turning point.
    #[getter]
    fn collar(&self) -> f64 {
        self.cfg.collar()
    }

    /// Opening D(z) of the configured profile.
    fn width(&self, z: f64) -> PyResult<f64> {
        Ok(self.cfg.profile(&self.base).map_err(to_py_err)?.d_at(z))
    }

    /// Turning points and sectors: a dict with `left_turning_points`,
    /// `right_turning_points`, `n0`, `n_min`, `left_sectors` and
    /// `right_sectors` (each sector a `(z_left, z_right, n_modes)` tuple).
    fn layout(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let profile = self.cfg.profile(&self.base).map_err(to_py_err)?;
        let layout = self.cfg.layout(&profile).map_err(to_py_err)?;
        let value = json!({
            "left_turning_points": layout.left_turning_points,
            "right_turning_points": layout.right_turning_points,
            "n0": layout.n0,
            "n_min": layout.n_min,
            "left_sectors": layout.left_sectors(),
            "right_sectors": layout.right_sectors(),
        });
        to_python(py, &value)
    }

    /// Diffusion-limit coefficients at position `z`, for every mode that
    /// propagates there.
    fn coupling(&self, py: Python<'_>, z: f64) -> PyResult<Coupling> {
        let profile = self.cfg.profile(&self.base).map_err(to_py_err)?;
        let corr = self.cfg.correlation(&self.base).map_err(to_py_err)?;
        let d = profile.d_at(z);
        let n = mode_count_for_width(self.cfg.k(), d);
        let (k, sigma, opts) = (self.cfg.k(), self.cfg.sigma(), self.cfg.coupling_options());
        let set = py.detach(|| coupling_set(k, sigma, &corr, d, n, z, &opts)).map_err(to_py_err)?;
        Ok(Coupling { set })
    }

    /// Chained moment transport. Returns a dict with the source amplitudes,
    /// the power balance, the universal-limit comparison, reflections,
    /// transmitted segments and per-sector trajectories.
    fn transport(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let ledger = py.detach(|| transport_ledger(&self.cfg, &self.base)).map_err(to_py_err)?;
        let value = json!({
            "b_o": ledger.b_o.iter().map(|b| (b.re, b.im)).collect::<Vec<_>>(),
            "collar": ledger.collar,
            "balance": ledger.balance,
            "universal_limit": ledger.universal,
            "reflected": ledger.reflected,
            "transmitted": ledger.transmitted,
            "sectors": ledger.left.iter().chain(&ledger.right).map(sector_json).collect::<Vec<_>>(),
        });
        to_python(py, &value)
    }

    /// Monte Carlo ensemble of the pre-limit system compared with the
    /// moment equations. `trajectories` and `seed` override the `[mc]`
    /// section.
    #[pyo3(signature = (trajectories = None, seed = None))]
    fn montecarlo(&self, py: Python<'_>, trajectories: Option<usize>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
        let mut cfg = self.cfg.clone();
        if let Some(mc) = cfg.mc.as_mut() {
            if let Some(n) = trajectories {
                mc.n_trajectories = n;
            }
            if let Some(s) = seed {
                mc.seed = s;
            }
        }
        cfg.validate().map_err(to_py_err)?;
        let run = py.detach(|| montecarlo_run(&cfg, &self.base)).map_err(to_py_err)?;
        let value = json!({
            "epsilon": run.epsilon,
            "z": run.stats.z,
            "n_trajectories": run.stats.n_trajectories,
            "mean_power": run.stats.mean_power,
            "power_std_err": run.stats.power_std_err,
            "max_energy_drift": run.stats.max_energy_drift,
            "predicted_mean_power": run.predicted.iter().map(|s| s.mean_powers.clone()).collect::<Vec<_>>(),
            "report": run.report,
        });
        to_python(py, &value)
    }

    fn __repr__(&self) -> String {
        format!("Config(k={}, sigma={}, epsilon={}, correlation_length={})", self.cfg.k(), self.cfg.sigma(), self.cfg.epsilon(), self.cfg.correlation_length())
    }
}

/// Diffusion-limit coefficients at one point of the guide.
#[pyclass(module = "pymodeflux", frozen)]
struct Coupling {
    set: CouplingSet,
}

#[pymethods]
impl Coupling {
    #[getter]
    fn z(&self) -> f64 {
        self.set.z
    }

    #[getter]
    fn d(&self) -> f64 {
        self.set.d
    }

    #[getter]
    fn n_prop(&self) -> usize {
        self.set.n_prop
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.set.beta.clone()
    }

    /// Power-exchange matrix (rows of a symmetric matrix with zero row sums).
    #[getter]
    fn gc(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.set.gc)
    }

    #[getter]
    fn g0(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.set.g0)
    }

    #[getter]
    fn gs(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.set.gs)
    }

    #[getter]
    fn kappa(&self) -> Vec<f64> {
        self.set.kappa.clone()
    }

    /// Mean-amplitude decay rate of every mode.
    fn amplitude_decay_rates(&self) -> Vec<f64> {
        self.set.amplitude_decay_rates()
    }

    /// Mean-free-path lengths, equipartition length and the spectrum of the
    /// power-exchange matrix.
    fn length_scales(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let s = length_scales(&self.set).map_err(to_py_err)?;
        to_python(py, &serde_json::to_value(&s).map_err(|e| ModefluxError::new_err(e.to_string()))?)
    }
}

/// Axial wavenumber of propagating mode `j` in a guide of opening `d`.
#[pyfunction]
fn beta(k: f64, j: usize, d: f64) -> PyResult<f64> {
    modeflux::modes::beta_propagating(k, j, d).map_err(to_py_err)
}

/// Number of propagating modes at opening `d`.
#[pyfunction]
fn mode_count(k: f64, d: f64) -> usize {
    mode_count_for_width(k, d)
}

/// Quadrature-versus-closed-form residuals of the eigenfunction integral
/// identities for indices up to `max_index` at each opening in `widths`.
#[pyfunction]
fn identity_suite(py: Python<'_>, max_index: usize, widths: Vec<f64>) -> PyResult<Py<PyAny>> {
    let rows = py.detach(|| modeflux::modes::identity_suite(max_index, &widths));
    let value = Value::Array(
        rows.iter()
            .map(|r| json!({"identity": r.identity.name(), "j": r.j, "q": r.q, "d": r.d, "quadrature": r.quadrature, "closed_form": r.closed_form, "residual": r.residual}))
            .collect(),
    );
    to_python(py, &value)
}

#[pymodule]
pub fn pymodeflux(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Coupling>()?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(mode_count, m)?)?;
    m.add_function(wrap_pyfunction!(identity_suite, m)?)?;
    m.add("ModefluxError", m.py().get_type::<ModefluxError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
