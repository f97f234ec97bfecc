//! Python bindings for the coopsim simulator.

use coopsim::dstc::{self, CodeScheme, SchemeKind};
use coopsim::engine::{self, BerPoint, PacketResult, SystemConfig};
use coopsim::mmse::{self, WienerStats};
use coopsim::{modem, CMat, Error, C64};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_mat(rows: Vec<Vec<C64>>) -> PyResult<CMat> {
    CMat::from_rows(&rows).map_err(py_err)
}

fn from_mat(m: &CMat) -> Vec<Vec<C64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Scenario configuration. Keyword arguments use the config-file keys.
#[pyclass(name = "Config", module = "coopsim_py", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SystemConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg = PyConfig { inner: SystemConfig::default() };
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                cfg.set(&k.extract::<String>()?, &v.str()?.to_string())?;
            }
        }
        Ok(cfg)
    }

    #[staticmethod]
    fn from_kv(text: &str) -> PyResult<Self> {
        let mut inner = SystemConfig::default();
        inner.apply_kv(text).map_err(py_err)?;
        Ok(PyConfig { inner })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        // Python spells booleans True/False
        let value = match value {
            "True" => "true",
            "False" => "false",
            v => v,
        };
        self.inner.set(key, value).map_err(py_err)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner
            .to_kv()
            .lines()
            .find_map(|l| l.split_once('=').filter(|(k, _)| k.trim() == key).map(|(_, v)| v.trim().to_string()))
            .ok_or_else(|| PyValueError::new_err(format!("unknown key `{key}`")))
    }

    fn to_kv(&self) -> String {
        self.inner.to_kv()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    fn sigma2_at(&self, ebn0_db: f64) -> f64 {
        self.inner.sigma2_at(ebn0_db)
    }

    fn mode_label(&self) -> String {
        self.inner.mode_label()
    }

    fn __repr__(&self) -> String {
        format!("Config({})", self.inner.to_kv().trim().replace('\n', ", "))
    }
}

fn packet_dict<'py>(py: Python<'py>, r: &PacketResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("bit_errors", r.bit_errors)?;
    d.set_item("bits", r.bits)?;
    d.set_item("reliable_count", r.reliable_count)?;
    d.set_item("vectors", r.vectors)?;
    d.set_item("energy_broadcast", r.energy_broadcast)?;
    d.set_item("energy_relay", r.energy_relay)?;
    Ok(d)
}

fn point_dict<'py>(py: Python<'py>, p: &BerPoint) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ebn0_db", p.ebn0_db)?;
    d.set_item("ber", p.ber)?;
    d.set_item("bit_errors", p.bit_errors)?;
    d.set_item("bits", p.bits)?;
    d.set_item("packets", p.packets)?;
    d.set_item("mean_reliable", p.mean_reliable)?;
    d.set_item("std_error", p.std_error())?;
    Ok(d)
}

/// Simulates one packet at the config's `sigma2`.
#[pyfunction]
fn run_packet<'py>(py: Python<'py>, cfg: &PyConfig, packet: u64) -> PyResult<Bound<'py, PyDict>> {
    let inner = cfg.inner.clone();
    let r = py.detach(move || engine::run_packet(&inner, packet)).map_err(py_err)?;
    packet_dict(py, &r)
}

/// BER at each Eb/N0 (dB), ascending.
#[pyfunction]
fn sweep<'py>(py: Python<'py>, cfg: &PyConfig, ebn0_db: Vec<f64>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let inner = cfg.inner.clone();
    let pts = py.detach(move || engine::sweep(&inner, &ebn0_db)).map_err(py_err)?;
    pts.iter().map(|p| point_dict(py, p)).collect()
}

/// Gray QPSK symbols for a flat bit list.
#[pyfunction]
fn modulate(bits: Vec<u8>) -> PyResult<Vec<C64>> {
    if bits.iter().any(|&b| b > 1) {
        return Err(PyValueError::new_err("bits must be 0 or 1"));
    }
    Ok(modem::modulate(&bits, bits.len() / 2).map_err(py_err)?.into_inner())
}

#[pyfunction]
fn demodulate(symbols: Vec<C64>) -> Vec<u32> {
    symbols.iter().flat_map(|&z| modem::demodulate(z)).map(u32::from).collect()
}

/// Alamouti codeword (rows = antennas, columns = slots).
#[pyfunction]
#[pyo3(signature = (symbols, randomizer = None))]
fn encode(symbols: Vec<C64>, randomizer: Option<Vec<Vec<C64>>>) -> PyResult<Vec<Vec<C64>>> {
    let scheme = match randomizer {
        None => CodeScheme::d_alamouti(),
        Some(u) => CodeScheme::r_alamouti(to_mat(u)?).map_err(py_err)?,
    };
    let cw = dstc::encode(&scheme, &symbols).map_err(py_err)?;
    Ok(from_mat(&cw.matrix))
}

/// Noise variance for QPSK at `ebn0_db`.
#[pyfunction]
#[pyo3(signature = (ebn0_db, code_rate = 1.0))]
fn ebn0_to_sigma2(ebn0_db: f64, code_rate: f64) -> f64 {
    coopsim::fading::ebn0_to_sigma2(ebn0_db, 2, code_rate)
}

/// `(R + ridge I)^-1 p`.
#[pyfunction]
#[pyo3(signature = (r, p, ridge = mmse::DEFAULT_RIDGE))]
fn wiener_filter(r: Vec<Vec<C64>>, p: Vec<C64>, ridge: f64) -> PyResult<Vec<C64>> {
    if p.is_empty() {
        return Err(PyValueError::new_err("empty cross-correlation"));
    }
    let stats = WienerStats { r: to_mat(r)?, p: CMat::col(&p) };
    let w = mmse::wiener_filter(&stats, ridge).map_err(py_err)?;
    Ok(from_mat(&w).into_iter().map(|row| row[0]).collect())
}

#[pymodule]
fn coopsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run_packet, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(modulate, m)?)?;
    m.add_function(wrap_pyfunction!(demodulate, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(ebn0_to_sigma2, m)?)?;
    m.add_function(wrap_pyfunction!(wiener_filter, m)?)?;
    m.add("SCHEMES", [SchemeKind::DAlamouti.as_str(), SchemeKind::RAlamouti.as_str()])?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
