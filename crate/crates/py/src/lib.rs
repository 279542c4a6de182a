//! Python bindings for `beatpose-core`.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use beatpose_core::beatmap::{self, parse_unvalidated};
use beatpose_core::context::select_style_references;
use beatpose_core::eval::{self, ScoringGeometry};
use beatpose_core::model::{
    gradient_check_mutated, read_checkpoint, write_checkpoint, DEFAULT_GRADCHECK_EPSILON,
};
use beatpose_core::pose::{self, load_pose_trace, write_pose_trace};
use beatpose_core::rollout::rest_seed;
use beatpose_core::synth::random_feature_example;
use beatpose_core::util::stage_rng;
use beatpose_core::{
    ConstantPredictor, LaneGeometry, ModelPredictor, Predictor, Quat, RolloutConfig,
    RolloutSettings,
};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

#[pyfunction]
fn beats_to_seconds(beat: f64, bpm: f64) -> PyResult<f64> {
    beatmap::beats_to_seconds(beat, bpm).map_err(value_err)
}

/// Quaternion `(w, x, y, z)` to the first two rotation-matrix columns.
#[pyfunction]
fn rotation_to_6d(q: (f64, f64, f64, f64)) -> [f64; 6] {
    pose::rotation_to_6d(Quat::new(q.0, q.1, q.2, q.3).normalized())
}

#[pyfunction]
fn rotation_from_6d(v: Vec<f64>) -> PyResult<(f64, f64, f64, f64)> {
    let q = pose::rotation_from_6d(&v).map_err(value_err)?;
    Ok((q.w, q.x, q.y, q.z))
}

/// Rule violations of a beatmap document, formatted as `list[i].field (rule)`.
#[pyfunction]
fn validate_beatmap(json: &str) -> PyResult<Vec<String>> {
    let (_, violations) = parse_unvalidated(json).map_err(value_err)?;
    Ok(violations.iter().map(|v| v.to_string()).collect())
}

#[pyclass(name = "Beatmap", frozen)]
struct PyBeatmap {
    inner: beatpose_core::Beatmap,
}

#[pymethods]
impl PyBeatmap {
    #[staticmethod]
    fn parse(json: &str) -> PyResult<Self> {
        Ok(PyBeatmap {
            inner: beatpose_core::parse_beatmap(json).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let raw = std::fs::read_to_string(path).map_err(io_err)?;
        Self::parse(&raw)
    }

    #[getter]
    fn bpm(&self) -> f64 {
        self.inner.bpm
    }

    #[getter]
    fn song_length(&self) -> f64 {
        self.inner.song_length
    }

    #[getter]
    fn note_count(&self) -> usize {
        self.inner.notes.len()
    }

    #[getter]
    fn bomb_count(&self) -> usize {
        self.inner.bombs.len()
    }

    #[getter]
    fn obstacle_count(&self) -> usize {
        self.inner.obstacles.len()
    }

    /// Event times in seconds, in timeline order.
    fn note_times(&self) -> Vec<f64> {
        self.inner
            .notes
            .iter()
            .map(|n| self.inner.seconds(n.beat))
            .collect()
    }

    fn to_json(&self) -> String {
        beatmap::to_json(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Beatmap(bpm={}, notes={}, bombs={}, obstacles={})",
            self.inner.bpm,
            self.inner.notes.len(),
            self.inner.bombs.len(),
            self.inner.obstacles.len()
        )
    }
}

#[pyclass(name = "PoseTrace", frozen)]
struct PyPoseTrace {
    inner: beatpose_core::PoseTrace,
}

#[pymethods]
impl PyPoseTrace {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(PyPoseTrace {
            inner: load_pose_trace(text.as_bytes()).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(io_err)?;
        Ok(PyPoseTrace {
            inner: load_pose_trace(BufReader::new(file)).map_err(value_err)?,
        })
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut out = Vec::new();
        write_pose_trace(&self.inner, &mut out).map_err(value_err)?;
        String::from_utf8(out).map_err(value_err)
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate
    }

    fn timestamps(&self) -> Vec<f64> {
        self.inner.frames.iter().map(|f| f.timestamp).collect()
    }

    /// Per frame `[head, left, right]`, each `(x, y, z, qw, qx, qy, qz)`.
    fn frames(&self) -> Vec<[[f64; 7]; 3]> {
        self.inner
            .frames
            .iter()
            .map(|f| {
                f.joints().map(|j| {
                    let (p, q) = (j.position, j.orientation);
                    [p.x, p.y, p.z, q.w, q.x, q.y, q.z]
                })
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.frames.len()
    }
}

#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: beatpose_core::Model,
}

#[pymethods]
impl PyModel {
    /// Fresh weights. Omitted sizes take the small gradient-check defaults.
    #[staticmethod]
    #[pyo3(signature = (seed, d_z=None, hidden=None, history=None, future=None, n=None, n_ref=None))]
    fn init(
        seed: u64,
        d_z: Option<usize>,
        hidden: Option<usize>,
        history: Option<usize>,
        future: Option<usize>,
        n: Option<usize>,
        n_ref: Option<usize>,
    ) -> PyResult<Self> {
        let toy = beatpose_core::ModelConfig::toy();
        let cfg = beatpose_core::ModelConfig {
            d_z: d_z.unwrap_or(toy.d_z),
            hidden: hidden.unwrap_or(toy.hidden),
            history: history.unwrap_or(toy.history),
            future: future.unwrap_or(toy.future),
            n: n.unwrap_or(toy.n),
            n_ref: n_ref.unwrap_or(toy.n_ref),
        };
        if [cfg.d_z, cfg.hidden, cfg.future, cfg.n, cfg.n_ref].contains(&0) {
            return Err(PyValueError::new_err("model sizes must be positive"));
        }
        let params = beatpose_core::ModelParams::init(&cfg, &mut stage_rng(seed, "init"));
        Ok(PyModel {
            inner: beatpose_core::Model::new(cfg, params),
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(io_err)?;
        let (cfg, params) = read_checkpoint(&mut BufReader::new(file)).map_err(value_err)?;
        Ok(PyModel {
            inner: beatpose_core::Model::new(cfg, params),
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(io_err)?;
        write_checkpoint(
            &mut BufWriter::new(file),
            &self.inner.config,
            &self.inner.params,
        )
        .map_err(value_err)
    }

    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = &self.inner.config;
        let d = PyDict::new(py);
        d.set_item("d_z", c.d_z)?;
        d.set_item("hidden", c.hidden)?;
        d.set_item("history", c.history)?;
        d.set_item("future", c.future)?;
        d.set_item("n", c.n)?;
        d.set_item("n_ref", c.n_ref)?;
        Ok(d)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.params.parameter_count()
    }

    /// Worst relative error between analytic and finite-difference gradients
    /// on a random example, with the block it occurred in.
    #[pyo3(signature = (seed, lambda_match=0.1))]
    fn gradient_check(&self, seed: u64, lambda_match: f64) -> PyResult<(f64, String)> {
        let ex = random_feature_example(&self.inner.config, &mut stage_rng(seed, "gradcheck"));
        gradient_check_mutated(
            &self.inner,
            &ex,
            lambda_match,
            DEFAULT_GRADCHECK_EPSILON,
            |_| {},
        )
        .map_err(value_err)
    }

    /// Style latent of references sampled from a donor trace.
    fn encode_style(&self, donor: &PyPoseTrace, seed: u64) -> PyResult<Vec<f64>> {
        let c = &self.inner.config;
        let refs =
            select_style_references(&donor.inner, c.n_ref, c.future, seed).map_err(value_err)?;
        let z = self
            .inner
            .encode_style(&refs.features())
            .map_err(value_err)?;
        Ok(z.0)
    }

    /// Generates a trace for `beatmap`, conditioned on `donor`'s style.
    #[pyo3(signature = (beatmap, donor, seed, rate=30.0, stride=None, blend=None, horizon=2.0))]
    #[allow(clippy::too_many_arguments)]
    fn rollout(
        &self,
        beatmap: &PyBeatmap,
        donor: &PyPoseTrace,
        seed: u64,
        rate: f64,
        stride: Option<usize>,
        blend: Option<usize>,
        horizon: f64,
    ) -> PyResult<PyPoseTrace> {
        let c = &self.inner.config;
        let refs =
            select_style_references(&donor.inner, c.n_ref, c.future, seed).map_err(value_err)?;
        let predictor = ModelPredictor::new(&self.inner, &refs.features()).map_err(value_err)?;
        run_rollout(&predictor, beatmap, rate, stride, blend, horizon)
    }
}

fn run_rollout(
    predictor: &dyn Predictor,
    beatmap: &PyBeatmap,
    rate: f64,
    stride: Option<usize>,
    blend: Option<usize>,
    horizon: f64,
) -> PyResult<PyPoseTrace> {
    let defaults = RolloutSettings::default();
    let stride = stride.unwrap_or(defaults.stride.min(predictor.future()));
    let blend = blend.unwrap_or(
        defaults
            .blend
            .min(predictor.future().saturating_sub(stride))
            .min(stride.saturating_sub(1)),
    );
    let settings = RolloutSettings { stride, blend };
    let cfg = RolloutConfig {
        settings,
        seed_history: rest_seed(predictor.history_len(), rate),
        rate,
        horizon,
    };
    let trace = beatpose_core::rollout(predictor, &beatmap.inner, &LaneGeometry::default(), &cfg)
        .map_err(value_err)?;
    Ok(PyPoseTrace { inner: trace })
}

/// Rollout with a predictor that repeats the last history frame.
#[pyfunction]
#[pyo3(signature = (beatmap, history=15, future=30, rate=30.0, stride=15, blend=5, horizon=2.0))]
fn rollout_constant(
    beatmap: &PyBeatmap,
    history: usize,
    future: usize,
    rate: f64,
    stride: usize,
    blend: usize,
    horizon: f64,
) -> PyResult<PyPoseTrace> {
    let predictor = ConstantPredictor {
        history,
        future,
        n: 3,
    };
    run_rollout(
        &predictor,
        beatmap,
        rate,
        Some(stride),
        Some(blend),
        horizon,
    )
}

/// Scores a trace against a beatmap with the default play-space geometry.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    trace: &PyPoseTrace,
    beatmap: &PyBeatmap,
) -> PyResult<Bound<'py, PyDict>> {
    let report = eval::evaluate(
        &trace.inner,
        &beatmap.inner,
        &LaneGeometry::default(),
        &ScoringGeometry::default(),
        None,
    )
    .map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("hit_rate", report.hit_rate)?;
    d.set_item("jerk", report.jerk)?;
    d.set_item("bomb_touches", report.bomb_touches)?;
    d.set_item("obstacle_collisions", report.obstacle_collisions)?;
    d.set_item(
        "outcomes",
        report.outcomes.iter().map(|o| o.name()).collect::<Vec<_>>(),
    )?;
    Ok(d)
}

#[pymodule]
fn beatpose(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBeatmap>()?;
    m.add_class::<PyPoseTrace>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(beats_to_seconds, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_to_6d, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_from_6d, m)?)?;
    m.add_function(wrap_pyfunction!(validate_beatmap, m)?)?;
    m.add_function(wrap_pyfunction!(rollout_constant, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
