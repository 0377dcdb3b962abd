//! Python bindings. Structured values cross the boundary as the same JSON
//! records the command-line tools write, so `json.loads` gives plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use trajverb::eval::average_precision as ap;
use trajverb::io::{clip_from_json, clip_to_json, session_from_json, session_to_json};
use trajverb::label::{oracle_label, Label, OracleConfig, Provenance};
use trajverb::model::discounted_mse as dmse;
use trajverb::pipeline::{run_pipeline, PipelineConfig, Stage};
use trajverb::segment::{segment_session, SegmentConfig};
use trajverb::sim::{generate_session as gen, SceneConfig};
use trajverb::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::MissingInput { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn scene_from(toml_text: Option<&str>) -> PyResult<SceneConfig> {
    match toml_text {
        Some(t) => SceneConfig::from_toml_str(t).map_err(py_err),
        None => Ok(SceneConfig::default()),
    }
}

/// One simulated session as a JSON record.
#[pyfunction]
#[pyo3(signature = (seed, scene_toml=None))]
fn generate_session(seed: u64, scene_toml: Option<&str>) -> PyResult<String> {
    let scene = scene_from(scene_toml)?;
    let s = gen(seed, &scene).map_err(py_err)?;
    session_to_json(&s).map_err(py_err)
}

/// Clips (JSON records) cut from a session record.
#[pyfunction]
#[pyo3(signature = (session_json, k=24, window=45, sigma=15.0, threshold=0.1, seed=0))]
fn segment(
    session_json: &str,
    k: usize,
    window: usize,
    sigma: f64,
    threshold: f64,
    seed: u64,
) -> PyResult<Vec<String>> {
    let s = session_from_json(session_json, 0).map_err(py_err)?;
    let cfg = SegmentConfig {
        k,
        window,
        sigma,
        threshold,
    };
    let seg = segment_session(&s, &cfg, seed).map_err(py_err)?;
    seg.clips.iter().map(|c| clip_to_json(c).map_err(py_err)).collect()
}

/// Oracle verb labels of a clip, `True`/`False`/`None` (masked) in verb
/// order. The session record supplies the event log.
#[pyfunction]
fn oracle_labels(clip_json: &str, session_json: &str) -> PyResult<Vec<Option<bool>>> {
    let clip = clip_from_json(clip_json, 0).map_err(py_err)?;
    let s = session_from_json(session_json, 0).map_err(py_err)?;
    let prov = Provenance {
        params: &s.params,
        events: &s.events,
    };
    let l = oracle_label(&clip, Some(&prov), &SceneConfig::default(), &OracleConfig::default()).map_err(py_err)?;
    Ok(l.0
        .iter()
        .map(|x| match x {
            Label::Yes => Some(true),
            Label::No => Some(false),
            Label::Masked => None,
        })
        .collect())
}

/// Verb names in label order.
#[pyfunction]
fn verbs() -> Vec<&'static str> {
    trajverb::label::Verb::ALL.iter().map(|v| v.name()).collect()
}

#[pyfunction]
fn average_precision(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    Ok(ap(&scores, &labels))
}

/// Discounted squared error between two `k × 10` forecasts.
#[pyfunction]
fn discounted_mse(pred: Vec<Vec<f64>>, target: Vec<Vec<f64>>, gamma: f64) -> PyResult<f64> {
    let to_array = |rows: Vec<Vec<f64>>| -> PyResult<ndarray::Array2<f64>> {
        let n = rows.len();
        let w = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != w) {
            return Err(PyValueError::new_err("ragged rows"));
        }
        ndarray::Array2::from_shape_vec((n, w), rows.concat()).map_err(|e| PyValueError::new_err(e.to_string()))
    };
    dmse(&to_array(pred)?, &to_array(target)?, gamma).map_err(py_err)
}

/// Runs pipeline stages for a TOML config and returns the manifest JSON.
#[pyfunction]
#[pyo3(signature = (config_toml, out, stages=None))]
fn pipeline(py: Python<'_>, config_toml: &str, out: PathBuf, stages: Option<Vec<String>>) -> PyResult<String> {
    let mut cfg = PipelineConfig::from_toml_str(config_toml).map_err(py_err)?;
    cfg.out = out;
    let stages: Vec<Stage> = match stages {
        Some(v) => v.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(py_err)?,
        None => Stage::ALL.to_vec(),
    };
    let m = py.detach(|| run_pipeline(&cfg, &stages)).map_err(py_err)?;
    serde_json::to_string(&m).map_err(|e| py_err(e.into()))
}

#[pymodule]
fn trajverb_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate_session, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_labels, m)?)?;
    m.add_function(wrap_pyfunction!(verbs, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(discounted_mse, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    Ok(())
}
