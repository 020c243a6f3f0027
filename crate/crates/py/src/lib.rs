//! Python bindings: `import radcap`.
//!
//! Structured results (parsed predictions, metrics, diagnostic reports) come
//! back as plain dicts. Caption records are `(frame_key, format, text)`
//! tuples.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use radcap_core::caption::{self, CaptionFormat, CaptionRecord};
use radcap_core::config::RunConfig;
use radcap_core::container::GridExtents;
use radcap_core::diagnostics::{self, TokenMatrix};
use radcap_core::geometry::{FovLimits, SceneObject, SectorTable};
use radcap_core::manifest::{self, FrameKey, Split};
use radcap_core::metrics::{self, HallucinationMode, OovMode, StratifyKey};
use radcap_core::radar::{self, InputVariant, RadarGridConfig, Tesseract};
use radcap_core::report;
use radcap_core::ClassVocabulary;

type Record = (String, String, String);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: &impl Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn records(rows: Vec<Record>) -> PyResult<Vec<CaptionRecord>> {
    rows.into_iter()
        .map(|(frame_key, format, text)| {
            Ok(CaptionRecord {
                frame_key,
                format: format.parse::<CaptionFormat>().map_err(value_err)?,
                text,
            })
        })
        .collect()
}

fn vocabulary(path: Option<&str>) -> PyResult<ClassVocabulary> {
    match path {
        Some(p) => ClassVocabulary::load(p).map_err(value_err),
        None => Ok(ClassVocabulary::default()),
    }
}

/// Sequence manifest with weather, time-of-day and split metadata.
#[pyclass(name = "Manifest", frozen)]
struct PyManifest {
    inner: manifest::Manifest,
}

#[pymethods]
impl PyManifest {
    /// The shipped K-RADAR manifest.
    #[staticmethod]
    fn kradar() -> Self {
        Self { inner: manifest::Manifest::kradar() }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        manifest::Manifest::load(path).map(|inner| Self { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        text.parse().map(|inner| Self { inner }).map_err(value_err)
    }

    /// Metadata of the sequence a `"<seq>_<frame>"` key belongs to.
    fn resolve(&self, py: Python<'_>, frame_key: &str) -> PyResult<Py<PyAny>> {
        let key: FrameKey = frame_key.parse().map_err(value_err)?;
        let s = self.inner.resolve(key).map_err(value_err)?;
        let d = serde_json::json!({
            "seq_id": s.seq_id,
            "frame_count": s.frame_count,
            "object_count": s.object_count,
            "weather": s.weather.to_string(),
            "road": s.road,
            "time_of_day": s.time_of_day.to_string(),
            "split": s.split.to_string(),
            "zero_shot_weather": s.zero_shot_weather,
        });
        to_py(py, &d)
    }

    fn split_frame_total(&self, split: &str) -> PyResult<u64> {
        let split: Split = split.parse().map_err(value_err)?;
        Ok(self.inner.split_frame_total(split))
    }

    fn split_sequence_ids(&self, split: &str) -> PyResult<Vec<u32>> {
        let split: Split = split.parse().map_err(value_err)?;
        Ok(self.inner.split_sequence_ids(split))
    }

    fn canonical(&self) -> String {
        self.inner.to_canonical_string()
    }

    fn __len__(&self) -> usize {
        self.inner.sequences().len()
    }
}

/// Tolerant caption parser over a class vocabulary.
#[pyclass(name = "CaptionParser", frozen)]
struct PyCaptionParser {
    inner: radcap_core::CaptionParser,
}

#[pymethods]
impl PyCaptionParser {
    #[new]
    #[pyo3(signature = (vocab_path=None))]
    fn new(vocab_path: Option<&str>) -> PyResult<Self> {
        Ok(Self { inner: radcap_core::CaptionParser::new(vocabulary(vocab_path)?) })
    }

    #[pyo3(signature = (frame_key, text, format="prose"))]
    fn parse(&self, py: Python<'_>, frame_key: &str, text: &str, format: &str) -> PyResult<Py<PyAny>> {
        let format: CaptionFormat = format.parse().map_err(value_err)?;
        to_py(py, &self.inner.parse(frame_key, format, text))
    }
}

/// Ground-truth caption for `(class, range_m, azimuth_deg)` objects.
#[pyfunction]
#[pyo3(signature = (frame_key, objects, format="prose", top_k=4))]
fn caption_scene(frame_key: &str, objects: Vec<(String, f64, f64)>, format: &str, top_k: usize) -> PyResult<String> {
    let format: CaptionFormat = format.parse().map_err(value_err)?;
    let objs: Vec<SceneObject> = objects.into_iter().map(|(c, r, a)| SceneObject::new(c, r, a)).collect();
    caption::caption_scene(frame_key, &objs, format, top_k, FovLimits::default(), &SectorTable::default())
        .map(|c| c.text)
        .map_err(value_err)
}

/// Scores predictions against ground truth. Returns `{group: metrics}` with
/// an `"overall"` entry and one entry per stratum.
#[pyfunction]
#[pyo3(signature = (predictions, ground_truth, manifest=None, stratify=vec![], class_level=false, oov="drop"))]
fn evaluate(
    py: Python<'_>,
    predictions: Vec<Record>,
    ground_truth: Vec<Record>,
    manifest: Option<PyRef<'_, PyManifest>>,
    stratify: Vec<String>,
    class_level: bool,
    oov: &str,
) -> PyResult<Py<PyAny>> {
    let oov: OovMode = oov.parse().map_err(value_err)?;
    let mode = if class_level { HallucinationMode::ClassLevel } else { HallucinationMode::Instance };
    let parser = radcap_core::CaptionParser::new(ClassVocabulary::default());
    let (preds, gt) = (records(predictions)?, records(ground_truth)?);
    let evals = py
        .detach(|| metrics::evaluate_captions(&parser, &preds, &gt, oov))
        .map_err(value_err)?;
    let mut out = std::collections::BTreeMap::new();
    out.insert(report::OVERALL.to_string(), metrics::aggregate_with(&evals, mode).map_err(value_err)?);
    if !stratify.is_empty() {
        let m = manifest.ok_or_else(|| PyValueError::new_err("stratification needs a manifest"))?;
        for k in &stratify {
            let key: StratifyKey = k.parse().map_err(value_err)?;
            for (g, a) in metrics::stratify(&evals, &m.inner, key, mode).map_err(value_err)? {
                out.insert(report::stratum_group(g), a);
            }
        }
    }
    to_py(py, &out)
}

/// Turns a flat `(doppler, range, elevation, azimuth)` power tesseract into
/// network input. `extents` is `(range_min, range_max, az_min, az_max,
/// doppler_min, doppler_max)`. Returns `(dims, data)`.
#[pyfunction]
#[pyo3(signature = (dims, data, variant="5ch", extents=None))]
fn preprocess(
    py: Python<'_>,
    dims: [usize; 4],
    data: Vec<f32>,
    variant: &str,
    extents: Option<[f32; 6]>,
) -> PyResult<(Vec<usize>, Vec<f32>)> {
    let variant: InputVariant = variant.parse().map_err(value_err)?;
    let mut grid = RadarGridConfig::default();
    if let Some([a, b, c, d, e, f]) = extents {
        grid = grid.with_extents(GridExtents {
            range_min: a,
            range_max: b,
            az_min: c,
            az_max: d,
            dop_min: e,
            dop_max: f,
        });
    }
    [grid.doppler_bins, grid.range_bins, grid.elevation_bins, grid.azimuth_bins] = dims;
    let t = Tesseract::new(dims, data).map_err(value_err)?;
    let input = py.detach(|| radar::preprocess(&t, &grid, variant)).map_err(value_err)?;
    Ok((input.dims().to_vec(), input.data().to_vec()))
}

/// Unit-affine LayerNorm over each row.
#[pyfunction]
#[pyo3(signature = (rows, eps=diagnostics::DEFAULT_LAYER_NORM_EPS))]
fn layer_norm(rows: Vec<Vec<f32>>, eps: f64) -> PyResult<Vec<Vec<f32>>> {
    let t = TokenMatrix::from_rows(&rows).map_err(value_err)?;
    let out = diagnostics::layer_norm(&t, eps).map_err(value_err)?;
    Ok(out.rows().map(<[f32]>::to_vec).collect())
}

/// Token-norm statistics against a reference embedding set.
#[pyfunction]
#[pyo3(signature = (tokens, reference, threshold=diagnostics::DEFAULT_NORM_THRESHOLD))]
fn norm_check(py: Python<'_>, tokens: Vec<Vec<f32>>, reference: Vec<Vec<f32>>, threshold: f64) -> PyResult<Py<PyAny>> {
    let t = TokenMatrix::from_rows(&tokens).map_err(value_err)?;
    let r = TokenMatrix::from_rows(&reference).map_err(value_err)?;
    let report = diagnostics::norm_mismatch_check(&t, &r, threshold).map_err(value_err)?;
    to_py(py, &report)
}

/// Compares captions from real, zeroed and noise inputs.
#[pyfunction]
#[pyo3(signature = (real, zeros, noise, threshold=diagnostics::DEFAULT_IDENTICAL_THRESHOLD))]
fn swap_test(py: Python<'_>, real: Vec<Record>, zeros: Vec<Record>, noise: Vec<Record>, threshold: f64) -> PyResult<Py<PyAny>> {
    let report = diagnostics::swap_test(&records(real)?, &records(zeros)?, &records(noise)?, threshold).map_err(value_err)?;
    to_py(py, &report)
}

#[pyfunction]
fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    diagnostics::normalized_edit_distance(a, b)
}

/// SHA-256 of the canonical form of a `key = value` config text.
#[pyfunction]
fn config_hash(text: &str) -> PyResult<String> {
    let cfg = RunConfig::parse(text).map_err(value_err)?;
    cfg.validate().map_err(value_err)?;
    Ok(cfg.hash())
}

#[pymodule]
fn radcap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyManifest>()?;
    m.add_class::<PyCaptionParser>()?;
    m.add_function(wrap_pyfunction!(caption_scene, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(layer_norm, m)?)?;
    m.add_function(wrap_pyfunction!(norm_check, m)?)?;
    m.add_function(wrap_pyfunction!(swap_test, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_edit_distance, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    Ok(())
}
