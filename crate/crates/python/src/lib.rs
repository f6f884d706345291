//! Python bindings for the `cornercase` engine.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use cornercase::cli::{cmd_score, load_run_input, DetectArgs, RunConfig};
use cornercase::detector::{self, DetectorOutput, EventTracker, NormalizationMode};
use cornercase::imaging::{self, BlurConfig};
use cornercase::metrics::{self, SsimParams};
use cornercase::segmentation::ClassMask;
use cornercase::synth::{self, ScenarioSpec};

fn to_py(err: cornercase::Error) -> PyErr {
    match err {
        cornercase::Error::Io(_) | cornercase::Error::MissingFile(_) | cornercase::Error::Image(_) => {
            PyIOError::new_err(err.to_string())
        }
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn to_py_any(err: anyhow::Error) -> PyErr {
    PyRuntimeError::new_err(format!("{err:#}"))
}

/// 8-bit image stored row-major with interleaved channels.
#[pyclass(name = "Frame", module = "cornercase_py", skip_from_py_object)]
#[derive(Clone)]
struct PyFrame {
    inner: imaging::Frame,
}

#[pymethods]
impl PyFrame {
    #[new]
    #[pyo3(signature = (height, width, channels, data))]
    fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> PyResult<Self> {
        let inner = imaging::Frame::new(height, width, channels, data).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn filled(height: usize, width: usize, channels: usize, value: u8) -> PyResult<Self> {
        let inner = imaging::Frame::filled(height, width, channels, value).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.height(), self.inner.width(), self.inner.channels())
    }

    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.data())
    }

    fn get(&self, row: usize, col: usize, channel: usize) -> PyResult<u8> {
        let f = &self.inner;
        if row >= f.height() || col >= f.width() || channel >= f.channels() {
            return Err(PyValueError::new_err("pixel index out of range"));
        }
        Ok(f.get(row, col, channel))
    }

    fn to_grayscale(&self) -> Self {
        Self {
            inner: self.inner.to_grayscale(),
        }
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        imaging::save_frame(path, &self.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Frame({})", self.inner.shape())
    }
}

#[pyfunction]
#[pyo3(signature = (path, grayscale = false))]
fn load_frame(path: PathBuf, grayscale: bool) -> PyResult<PyFrame> {
    let inner = imaging::load_frame(path, grayscale).map_err(to_py)?;
    Ok(PyFrame { inner })
}

#[pyfunction]
fn mse(a: &PyFrame, b: &PyFrame) -> PyResult<f64> {
    metrics::mse_real(&a.inner.to_real(), &b.inner.to_real()).map_err(to_py)
}

/// PSNR in dB; `inf` for identical images.
#[pyfunction]
#[pyo3(signature = (a, b, max_value = 255.0))]
fn psnr(a: &PyFrame, b: &PyFrame, max_value: f64) -> PyResult<f64> {
    let p = metrics::psnr_real(&a.inner.to_real(), &b.inner.to_real(), max_value).map_err(to_py)?;
    Ok(p.as_f64())
}

#[pyfunction]
fn ssim(a: &PyFrame, b: &PyFrame) -> PyResult<f64> {
    metrics::ssim_real(&a.inner.to_real(), &b.inner.to_real(), &SsimParams::default()).map_err(to_py)
}

/// Per-class and mean IoU of two label maps (0 is void).
/// Returns `(mean, {class_id: iou})` with unmeasurable classes omitted.
#[pyfunction]
fn iou(
    height: usize,
    width: usize,
    predicted: Vec<u8>,
    truth: Vec<u8>,
) -> PyResult<(f64, std::collections::BTreeMap<u8, f64>)> {
    let pred = ClassMask::new(height, width, predicted).map_err(to_py)?;
    let truth = ClassMask::new(height, width, truth).map_err(to_py)?;
    let m = metrics::confusion_matrix(&pred, &truth, 0).map_err(to_py)?;
    let report = metrics::iou(&m).map_err(to_py)?;
    let per_class = report
        .per_class
        .iter()
        .filter_map(|c| c.iou.map(|v| (c.class_id, v)))
        .collect();
    Ok((report.mean, per_class))
}

#[pyfunction]
#[pyo3(signature = (raw, mode = "offline"))]
fn normalize_series(raw: Vec<f64>, mode: &str) -> PyResult<Vec<f64>> {
    let mode: NormalizationMode = mode.parse().map_err(to_py)?;
    detector::normalize_series(&raw, mode).map_err(to_py)
}

/// Groups consecutive frames with score at or above `threshold`.
/// `scores` holds `(frame_index, score)` pairs in frame order; returns
/// `(event_id, start, end, peak_frame, peak_score)` tuples.
#[pyfunction]
fn threshold_events(scores: Vec<(u64, f64)>, threshold: f64) -> PyResult<Vec<EventRow>> {
    let mut tracker = EventTracker::new(threshold).map_err(to_py)?;
    for (index, score) in scores {
        tracker.push(index, score);
    }
    Ok(tracker
        .finish()
        .into_iter()
        .map(|e| (e.id, e.start, e.end, e.peak_frame, e.peak_score))
        .collect())
}

/// Gaussian blur of a frame, rounded back to 8 bits.
#[pyfunction]
#[pyo3(signature = (frame, kernel_size = 10, sigma = 2.0))]
fn blur(frame: &PyFrame, kernel_size: usize, sigma: f64) -> PyResult<PyFrame> {
    let cfg = BlurConfig::new(kernel_size, sigma).map_err(to_py)?;
    let inner = imaging::gaussian_blur(&frame.inner.to_real(), &cfg).quantize();
    Ok(PyFrame { inner })
}

/// Renders a scenario description. Returns `(frames, masks, events)` where
/// masks are flat label lists and events are
/// `(frame_start, frame_end, class_id, base_row)` tuples.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn generate_scenario(spec: &str) -> PyResult<(Vec<PyFrame>, Vec<Vec<u8>>, Vec<(usize, usize, u8, usize)>)> {
    let spec = ScenarioSpec::parse(spec).map_err(to_py)?;
    let s = synth::generate_scenario(&spec).map_err(to_py)?;
    let frames = s.frames.into_iter().map(|inner| PyFrame { inner }).collect();
    let masks = s.masks.iter().map(|m| m.labels().to_vec()).collect();
    let events = s
        .events
        .events
        .iter()
        .map(|e| (e.frame_start, e.frame_end, e.class_id, e.base_row))
        .collect();
    Ok((frames, masks, events))
}

#[pyfunction]
#[pyo3(signature = (spec, out_dir, id_convention = "native"))]
fn write_scenario(spec: &str, out_dir: PathBuf, id_convention: &str) -> PyResult<()> {
    let spec = ScenarioSpec::parse(spec).map_err(to_py)?;
    let s = synth::generate_scenario(&spec).map_err(to_py)?;
    let convention = id_convention.parse().map_err(to_py)?;
    synth::write_scenario(out_dir, &spec, &s, convention).map_err(to_py)
}

type ScoreRow = (u64, f64, f64, bool, Option<u32>);
type EventRow = (u32, u64, u64, u64, f64);

fn rows(output: &DetectorOutput) -> (Vec<ScoreRow>, Vec<EventRow>) {
    let scores = output
        .series
        .records
        .iter()
        .zip(output.event_ids())
        .map(|(r, id)| (r.frame_index, r.raw, r.normalized, r.warmup, id))
        .collect();
    let events = output
        .events
        .iter()
        .map(|e| (e.id, e.start, e.end, e.peak_frame, e.peak_score))
        .collect();
    (scores, events)
}

/// Scores a directory of frames against a directory of masks.
///
/// Returns `(scores, events)`: scores are
/// `(frame_index, raw, normalized, warmup, event_id)` tuples. When `out` is
/// given the CSV outputs are written there as well.
#[pyfunction]
#[pyo3(signature = (
    frames, masks, out = None, threshold = None, predictor = None, window_n = None,
    mode = None, patch_size = None, no_blur = false, relevant = None, workers = None,
    id_convention = None, grayscale = false,
))]
#[allow(clippy::too_many_arguments)]
fn score_directory(
    frames: PathBuf,
    masks: PathBuf,
    out: Option<PathBuf>,
    threshold: Option<f64>,
    predictor: Option<String>,
    window_n: Option<usize>,
    mode: Option<String>,
    patch_size: Option<usize>,
    no_blur: bool,
    relevant: Option<String>,
    workers: Option<usize>,
    id_convention: Option<String>,
    grayscale: bool,
) -> PyResult<(Vec<ScoreRow>, Vec<EventRow>)> {
    let write = out.is_some();
    let args = DetectArgs {
        frames: Some(frames),
        masks: Some(masks),
        out: Some(out.unwrap_or_else(|| PathBuf::from("."))),
        threshold,
        predictor,
        window_n,
        mode,
        patch_size,
        no_blur,
        relevant,
        workers,
        id_convention,
        grayscale,
        ..DetectArgs::default()
    };
    let cfg = RunConfig::resolve(&args).map_err(to_py_any)?;
    let output = if write {
        cmd_score(&cfg).map_err(to_py_any)?
    } else {
        let input = load_run_input(&cfg).map_err(to_py_any)?;
        detector::run_detector(&input, &cfg.detector, cfg.workers).map_err(to_py)?
    };
    Ok(rows(&output))
}

#[pymodule]
fn cornercase_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrame>()?;
    m.add_function(wrap_pyfunction!(load_frame, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(blur, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_series, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_events, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(write_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(score_directory, m)?)?;
    Ok(())
}
