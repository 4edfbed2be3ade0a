//! Python bindings. Arrays cross the boundary as nested lists; complex planes
//! come back as Python `complex` values.

use bicoh_core::demod::{self, BandSpec, WindowKind};
use bicoh_core::features::{analyze, FeatureConfig};
use bicoh_core::pac::{self, Envelope};
use bicoh_core::polyspec::{self, BispecRequest, EstimatorKind, Normalization, Variant};
use bicoh_core::simgen::{self, SimRecipe};
use bicoh_core::{Complex64, Error};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn window_kind(name: &str) -> PyResult<WindowKind> {
    match name.to_ascii_lowercase().as_str() {
        "gaussian" => Ok(WindowKind::Gaussian),
        "hann" => Ok(WindowKind::Hann),
        other => Err(PyValueError::new_err(format!("unknown window {other:?}"))),
    }
}

fn rows<T: Clone>(a: &ndarray::Array2<T>) -> Vec<Vec<T>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// A sampled real signal.
#[pyclass(name = "Signal", module = "bicoh", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySignal {
    inner: demod::Signal,
}

#[pymethods]
impl PySignal {
    #[new]
    fn new(samples: Vec<f64>, fs: f64) -> PyResult<Self> {
        Ok(PySignal { inner: demod::Signal::new(samples, fs).map_err(py_err)? })
    }

    #[getter]
    fn fs(&self) -> f64 {
        self.inner.fs()
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.inner.samples().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Signal(n={}, fs={})", self.inner.len(), self.inner.fs())
    }
}

/// One filter of a bank.
#[pyclass(name = "Band", module = "bicoh", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyBand {
    center: f64,
    bandwidth: f64,
    window: String,
}

/// A coupling plane: raw sums plus the normalized values.
#[pyclass(name = "Plane", module = "bicoh", frozen)]
struct PyPlane {
    #[pyo3(get)]
    axis1: Vec<f64>,
    #[pyo3(get)]
    axis2: Vec<f64>,
    #[pyo3(get)]
    b: Vec<Vec<Complex64>>,
    #[pyo3(get)]
    beta: Vec<Vec<Complex64>>,
    #[pyo3(get)]
    magnitude: Vec<Vec<f64>>,
    #[pyo3(get)]
    valid: Vec<Vec<bool>>,
    #[pyo3(get)]
    n_frames: usize,
    #[pyo3(get)]
    bias_corrected: bool,
    bic: polyspec::Bicoherence,
}

#[pymethods]
impl PyPlane {
    fn __repr__(&self) -> String {
        format!("Plane({} x {}, frames={})", self.axis1.len(), self.axis2.len(), self.n_frames)
    }
}

fn plane(grid: &polyspec::BispecGrid, normalization: Normalization, bias: bool) -> PyResult<PyPlane> {
    let mut bic = polyspec::normalize(grid, normalization).map_err(py_err)?;
    if bias {
        bic = polyspec::bias_correct(&bic, grid).map_err(py_err)?;
    }
    Ok(PyPlane {
        axis1: grid.axis1(),
        axis2: grid.axis2(),
        b: rows(&grid.b),
        beta: rows(&bic.beta),
        magnitude: rows(&bic.magnitude),
        valid: rows(&bic.valid),
        n_frames: grid.n_frames,
        bias_corrected: bic.bias_corrected,
        bic,
    })
}

/// Render a JSON simulation recipe.
#[pyfunction]
fn simulate(recipe_json: &str) -> PyResult<PySignal> {
    let recipe: SimRecipe = serde_json::from_str(recipe_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PySignal { inner: simgen::gen(&recipe).map_err(py_err)? })
}

/// Filters centred every bandwidth/2 from f_min to f_max.
#[pyfunction]
#[pyo3(signature = (fs, f_min, f_max, bandwidth, window = "gaussian"))]
fn design_bank(fs: f64, f_min: f64, f_max: f64, bandwidth: f64, window: &str) -> PyResult<Vec<PyBand>> {
    let bank = demod::design_bank(fs, f_min, f_max, bandwidth, window_kind(window)?).map_err(py_err)?;
    Ok(bank
        .iter()
        .map(|b| PyBand { center: b.center, bandwidth: b.bandwidth, window: format!("{:?}", b.window_kind).to_lowercase() })
        .collect())
}

/// Bicoherence plane over range1 × range2.
#[pyfunction]
#[pyo3(signature = (signal, range1, range2, kind = "bbb", bw_narrow = 2.0, bw_broad = 2.0, normalization = "magsum", bias_correct = false))]
#[allow(clippy::too_many_arguments)]
fn bicoherence(
    signal: &PySignal,
    range1: (f64, f64),
    range2: (f64, f64),
    kind: &str,
    bw_narrow: f64,
    bw_broad: f64,
    normalization: &str,
    bias_correct: bool,
) -> PyResult<PyPlane> {
    let variant: Variant = kind.parse().map_err(py_err)?;
    let kind = EstimatorKind::new(variant, bw_narrow, bw_broad).map_err(py_err)?;
    let grid = polyspec::bispectrum_of(&signal.inner, &BispecRequest::new(kind, range1, range2)).map_err(py_err)?;
    plane(&grid, normalization.parse().map_err(py_err)?, bias_correct)
}

/// Phase-power coherence on a θ × γ grid, normalized by magnitude sums.
#[pyfunction]
#[pyo3(signature = (signal, theta_centers, gamma_centers, theta_bw = 1.0, gamma_bw = 40.0, amplitude_envelope = false))]
fn phase_power_coherence(
    signal: &PySignal,
    theta_centers: Vec<f64>,
    gamma_centers: Vec<f64>,
    theta_bw: f64,
    gamma_bw: f64,
    amplitude_envelope: bool,
) -> PyResult<PyPlane> {
    let bank = |c: &[f64], bw: f64| -> Vec<BandSpec> {
        c.iter().enumerate().map(|(i, &f)| BandSpec { index: i, ..BandSpec::new(f, bw, WindowKind::Gaussian) }).collect()
    };
    let env = if amplitude_envelope { Envelope::Amplitude } else { Envelope::Power };
    let g = pac::phase_power_coherence(&signal.inner, &bank(&theta_centers, theta_bw), &bank(&gamma_centers, gamma_bw), None, env)
        .map_err(py_err)?;
    plane(&g.grid, Normalization::MagnitudeSum, false)
}

/// Region scores and verdicts for a plane, as a JSON string.
#[pyfunction]
#[pyo3(signature = (plane, so_range, fo_range, fundamental = None))]
fn features(plane: &PyPlane, so_range: (f64, f64), fo_range: (f64, f64), fundamental: Option<f64>) -> PyResult<String> {
    let cfg = FeatureConfig { so_range, fo_range, fundamental, thresholds: None };
    let (report, _) = analyze(&plane.bic, &cfg).map_err(py_err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn bicoh(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySignal>()?;
    m.add_class::<PyBand>()?;
    m.add_class::<PyPlane>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(design_bank, m)?)?;
    m.add_function(wrap_pyfunction!(bicoherence, m)?)?;
    m.add_function(wrap_pyfunction!(phase_power_coherence, m)?)?;
    m.add_function(wrap_pyfunction!(features, m)?)?;
    Ok(())
}
