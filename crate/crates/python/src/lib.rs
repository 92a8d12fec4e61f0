//! Python bindings. Genomes and networks are immutable handles; configs cross
//! the boundary as keyword arguments or JSON strings, images as PNG bytes.

use cppnlab::analysis::{feature_maps_genome, feature_maps_mlp, novelty_flags, pca_features, sweep_frame, SweepTarget, DEFAULT_TAU};
use cppnlab::evolve::{scripted_run, EvolveConfig, ScriptedSelector};
use cppnlab::{
    layerize_with, render, train, train_on_raw_genome, verify_equivalence, ImageRgb, LayerizeOptions, LayerizedMlp,
    TargetSpec, TrainConfig, TrainTrace,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn png<'py>(py: Python<'py>, img: &ImageRgb) -> PyResult<Bound<'py, PyBytes>> {
    let bytes = img.encode_png().map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PyBytes::new(py, &bytes))
}

fn trace_pairs(trace: &TrainTrace) -> Vec<(usize, f64)> {
    trace.points.iter().map(|p| (p.iteration, p.mse)).collect()
}

#[pyclass(name = "Genome", frozen, module = "cppnlab")]
pub struct PyGenome {
    inner: cppnlab::Genome,
}

#[pymethods]
impl PyGenome {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        cppnlab::Genome::from_text(text).map(|inner| PyGenome { inner }).map_err(value_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn content_id(&self) -> String {
        self.inner.content_id()
    }

    #[getter]
    fn hidden_count(&self) -> usize {
        self.inner.hidden_count()
    }

    /// Raw `(h, s, v)` at one input point.
    fn eval(&self, x: f64, y: f64) -> PyResult<(f64, f64, f64)> {
        let [h, s, v] = cppnlab::eval_genome(&self.inner, &cppnlab::InputPoint::new(x, y)).map_err(value_err)?;
        Ok((h, s, v))
    }

    #[pyo3(signature = (resolution = 256))]
    fn render_png<'py>(&self, py: Python<'py>, resolution: usize) -> PyResult<Bound<'py, PyBytes>> {
        png(py, &render(&self.inner, resolution).map_err(value_err)?)
    }

    #[pyo3(signature = (carry_bias_input = false))]
    fn layerize(&self, carry_bias_input: bool) -> PyResult<PyMlp> {
        layerize_with(&self.inner, LayerizeOptions { carry_bias_input }).map(|inner| PyMlp { inner }).map_err(value_err)
    }

    /// Max absolute raw-output difference against `mlp` over the grid.
    #[pyo3(signature = (mlp, resolution = 64))]
    fn max_abs_diff(&self, mlp: &PyMlp, resolution: usize) -> PyResult<f64> {
        Ok(verify_equivalence(&self.inner, &mlp.inner, resolution, 0.0).map_err(value_err)?.max_abs_diff)
    }

    /// Number of feature maps (nodes included) not represented in an earlier layer.
    #[pyo3(signature = (resolution = 128, tau = DEFAULT_TAU))]
    fn novel_count(&self, resolution: usize, tau: f64) -> PyResult<usize> {
        let maps = feature_maps_genome(&self.inner, resolution).map_err(value_err)?;
        Ok(novelty_flags(&maps, tau).map_err(value_err)?.into_iter().filter(|&n| n).count())
    }

    fn __eq__(&self, other: &PyGenome) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Genome({}, hidden={})", &self.inner.content_id()[..12], self.inner.hidden_count())
    }
}

#[pyclass(name = "Mlp", frozen, module = "cppnlab")]
pub struct PyMlp {
    inner: LayerizedMlp,
}

#[pymethods]
impl PyMlp {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        LayerizedMlp::from_text(text).map(|inner| PyMlp { inner }).map_err(value_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn content_id(&self) -> String {
        self.inner.content_id()
    }

    #[getter]
    fn widths(&self) -> Vec<usize> {
        self.inner.widths()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// Weight matrix of layer `layer` (1-based), rows = receiving neurons.
    fn weights(&self, layer: usize) -> PyResult<Vec<Vec<f64>>> {
        let l = self
            .inner
            .layers()
            .get(layer.wrapping_sub(1))
            .ok_or_else(|| value_err(format!("layer {layer} out of range 1..={}", self.inner.depth())))?;
        Ok((0..l.width()).map(|r| l.row(r).to_vec()).collect())
    }

    #[pyo3(signature = (resolution = 256))]
    fn render_png<'py>(&self, py: Python<'py>, resolution: usize) -> PyResult<Bound<'py, PyBytes>> {
        png(py, &self.inner.render(resolution).map_err(value_err)?)
    }

    /// Per-map novelty flags, inputs first, in layer order.
    #[pyo3(signature = (resolution = 128, tau = DEFAULT_TAU))]
    fn novelty(&self, resolution: usize, tau: f64) -> PyResult<Vec<(usize, usize, bool)>> {
        let maps = feature_maps_mlp(&self.inner, resolution).map_err(value_err)?;
        let flags = novelty_flags(&maps, tau).map_err(value_err)?;
        Ok(maps.iter().zip(flags).map(|(m, n)| (m.layer, m.index, n)).collect())
    }

    /// Render with weight `(row, col)` of `layer` moved by `t`.
    #[pyo3(signature = (layer, row, col, t, resolution = 64))]
    fn sweep_png<'py>(&self, py: Python<'py>, layer: usize, row: usize, col: usize, t: f64, resolution: usize) -> PyResult<Bound<'py, PyBytes>> {
        let frame = sweep_frame(&self.inner, &SweepTarget::Weight { layer, row, col }, t, resolution).map_err(value_err)?;
        png(py, &frame)
    }

    /// `(variances, directions)` of layer `layer`'s feature maps (0 = inputs).
    #[pyo3(signature = (layer, resolution = 64))]
    fn pca(&self, layer: usize, resolution: usize) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let r = pca_features(&self.inner, resolution, layer).map_err(value_err)?;
        Ok((r.variances, r.directions))
    }

    fn __eq__(&self, other: &PyMlp) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Mlp(widths={:?})", self.inner.widths())
    }
}

/// Unattended breeding run; returns every generation's genomes and the champion.
#[pyfunction]
#[pyo3(signature = (seed = 0, generations = 30, selector = "largest-image-variance", config_json = None))]
fn evolve(seed: u64, generations: usize, selector: &str, config_json: Option<&str>) -> PyResult<(Vec<Vec<PyGenome>>, PyGenome)> {
    let mut cfg: EvolveConfig = match config_json {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => EvolveConfig::default(),
    };
    cfg.rng_seed = seed;
    let selector: ScriptedSelector = selector.parse().map_err(value_err)?;
    let run = scripted_run(&cfg, selector, generations).map_err(value_err)?;
    let champion = PyGenome { inner: run.champion().clone() };
    let generations = run
        .generations
        .into_iter()
        .map(|g| g.into_iter().map(|o| PyGenome { inner: o.genome }).collect())
        .collect();
    Ok((generations, champion))
}

fn train_config(config_json: Option<&str>) -> PyResult<TrainConfig> {
    let cfg: TrainConfig = match config_json {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => TrainConfig::default(),
    };
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

/// Trains `arch` towards `target`'s image; `config_json` holds TrainConfig fields.
/// Returns the trained network and the `(iteration, mse)` trace.
#[pyfunction(name = "train")]
#[pyo3(signature = (arch, target, config_json = None))]
fn train_py(py: Python<'_>, arch: &PyMlp, target: &PyGenome, config_json: Option<&str>) -> PyResult<(PyMlp, Vec<(usize, f64)>)> {
    let cfg = train_config(config_json)?;
    let spec = TargetSpec::from_genome(&target.inner, cfg.resolution).map_err(value_err)?;
    let (mlp, trace) = py.detach(|| train(&arch.inner, &spec, &cfg)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((PyMlp { inner: mlp }, trace_pairs(&trace)))
}

/// Trains a genome's own sparse graph towards `target`'s image.
#[pyfunction]
#[pyo3(signature = (genome, target, config_json = None))]
fn train_raw(py: Python<'_>, genome: &PyGenome, target: &PyGenome, config_json: Option<&str>) -> PyResult<(PyGenome, Vec<(usize, f64)>)> {
    let cfg = train_config(config_json)?;
    let spec = TargetSpec::from_genome(&target.inner, cfg.resolution).map_err(value_err)?;
    let (g, trace) = py
        .detach(|| train_on_raw_genome(&genome.inner, &spec, &cfg))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((PyGenome { inner: g }, trace_pairs(&trace)))
}

#[pymodule]
fn _cppnlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

/// Adds every class and function to `m`; shared by the extension entry point and embedders.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGenome>()?;
    m.add_class::<PyMlp>()?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(train_py, m)?)?;
    m.add_function(wrap_pyfunction!(train_raw, m)?)?;
    m.add("DEFAULT_TAU", DEFAULT_TAU)?;
    Ok(())
}
