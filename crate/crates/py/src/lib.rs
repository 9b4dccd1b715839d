//! Python bindings over the core pipeline: dataset containers, synthetic
//! generation, preprocessing, training, sampling, and the metric suite.
//!
//! Epoch payloads cross the boundary as flat `float32` lists plus a shape
//! tuple; `numpy.asarray(x).reshape(shape)` on the Python side.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use erpdiff_core::data::{
    generate_synthetic, load_epochs, save_epochs, split_train_val, ClassLabel, ConditionKey,
    SyntheticSpec,
};
use erpdiff_core::diffusion::{
    load_score_checkpoint, sample_condition, sample_matched, SampleConfig, TrainConfig, Trainer,
    VpSchedule as CoreVpSchedule,
};
use erpdiff_core::metrics::{
    evaluate_sets, evoked, sd_md, swd, train_feature_extractor, EvalOptions, FeatureExtractor,
    FxConfig, MetricKind,
};
use erpdiff_core::model::ModelConfig;
use erpdiff_core::signal::{
    preprocess_recording, ChannelLayout, ContinuousRecording, EpochSet as CoreEpochSet, Event,
    PreprocessConfig,
};
use erpdiff_core::CoreError;

fn py_err(e: CoreError) -> PyErr {
    match e {
        CoreError::Io { .. } | CoreError::Json { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(what: &str, json: &str) -> PyResult<T> {
    serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

/// A collection of fixed-shape epochs with condition labels.
#[pyclass]
#[derive(Clone)]
struct EpochSet {
    inner: CoreEpochSet,
}

#[pymethods]
impl EpochSet {
    /// Loads a dataset container directory.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(EpochSet {
            inner: load_epochs(&path).map_err(py_err)?,
        })
    }

    /// Writes a dataset container directory.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_epochs(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn n_epochs(&self) -> usize {
        self.inner.n_epochs()
    }

    #[getter]
    fn n_channels(&self) -> usize {
        self.inner.n_channels()
    }

    #[getter]
    fn epoch_len(&self) -> usize {
        self.inner.epoch_len()
    }

    #[getter]
    fn fs(&self) -> f64 {
        self.inner.fs()
    }

    #[getter]
    fn channels(&self) -> Vec<String> {
        self.inner.layout().names().to_vec()
    }

    /// `(subject, session, class)` per epoch.
    fn labels(&self) -> Vec<(u32, u32, String)> {
        self.inner
            .epochs()
            .iter()
            .map(|e| match e.condition {
                ConditionKey::Real {
                    subject,
                    session,
                    class,
                } => (subject, session, class.to_string()),
                ConditionKey::Unconditional => (0, 0, "unconditional".to_string()),
            })
            .collect()
    }

    /// Flat channel-major samples of one epoch plus its shape.
    fn epoch(&self, index: usize) -> PyResult<(Vec<f32>, (usize, usize))> {
        let e = self
            .inner
            .epochs()
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("epoch index {index} out of range")))?;
        Ok((
            e.data.iter().copied().collect(),
            (self.inner.n_channels(), self.inner.epoch_len()),
        ))
    }

    /// Epochs per (subject, session, class).
    fn counts(&self) -> Vec<(u32, u32, String, usize)> {
        self.inner
            .conditions()
            .into_iter()
            .filter_map(|c| match c {
                ConditionKey::Real {
                    subject,
                    session,
                    class,
                } => Some((
                    subject,
                    session,
                    class.to_string(),
                    self.inner.count_condition(c),
                )),
                ConditionKey::Unconditional => None,
            })
            .collect()
    }

    /// Stratified split into (train, validation).
    fn split(&self, val_fraction: f64, seed: u64) -> PyResult<(EpochSet, EpochSet)> {
        let (a, b) = split_train_val(&self.inner, val_fraction, seed).map_err(py_err)?;
        Ok((EpochSet { inner: a }, EpochSet { inner: b }))
    }

    /// Mean over epochs of one condition: flat values plus shape.
    fn evoked(
        &self,
        subject: u32,
        session: u32,
        class: &str,
    ) -> PyResult<(Vec<f64>, (usize, usize))> {
        let key = ConditionKey::real(subject, session, ClassLabel::parse(class).map_err(py_err)?);
        let ev = evoked(&self.inner, key).map_err(py_err)?;
        Ok((
            ev.data.iter().copied().collect(),
            (ev.data.nrows(), ev.data.ncols()),
        ))
    }

    fn __len__(&self) -> usize {
        self.inner.n_epochs()
    }

    fn __repr__(&self) -> String {
        format!(
            "EpochSet({} epochs, {} ch × {} samples @ {} Hz)",
            self.inner.n_epochs(),
            self.inner.n_channels(),
            self.inner.epoch_len(),
            self.inner.fs()
        )
    }
}

/// Variance-preserving SDE schedule.
#[pyclass]
#[derive(Clone, Copy)]
struct VpSchedule {
    inner: CoreVpSchedule,
}

#[pymethods]
impl VpSchedule {
    #[new]
    #[pyo3(signature = (beta_min = 0.1, beta_max = 20.0))]
    fn new(beta_min: f64, beta_max: f64) -> PyResult<Self> {
        Ok(VpSchedule {
            inner: CoreVpSchedule::new(beta_min, beta_max).map_err(py_err)?,
        })
    }

    /// `(mean_coeff, std)` of the perturbation kernel at time t.
    fn marginal(&self, t: f64) -> PyResult<(f64, f64)> {
        self.inner.marginal(t).map_err(py_err)
    }
}

/// Generates a synthetic dataset from a spec JSON string.
#[pyfunction]
fn synth(spec_json: &str) -> PyResult<EpochSet> {
    let spec: SyntheticSpec = parse_json("synthetic spec", spec_json)?;
    Ok(EpochSet {
        inner: generate_synthetic(&spec).map_err(py_err)?,
    })
}

/// Full preprocessing chain over one continuous recording.
/// `data` is flat channel-major float64 of shape `(len(channels), samples)`;
/// events are `(onset_sample, "target"|"nontarget")` pairs.
#[pyfunction]
#[pyo3(signature = (data, channels, fs, events, subject, session, config_json = "{}"))]
fn preprocess(
    data: Vec<f64>,
    channels: Vec<String>,
    fs: f64,
    events: Vec<(usize, String)>,
    subject: u32,
    session: u32,
    config_json: &str,
) -> PyResult<EpochSet> {
    let cfg: PreprocessConfig = parse_json("preprocess config", config_json)?;
    let layout = ChannelLayout::new(channels).map_err(py_err)?;
    let c = layout.count();
    if data.len() % c != 0 {
        return Err(PyValueError::new_err(format!(
            "flat data of {} values does not divide into {c} channels",
            data.len()
        )));
    }
    let samples = data.len() / c;
    let array = ndarray_from_flat(&data, c, samples);
    let events = events
        .into_iter()
        .map(|(onset, class)| {
            Ok(Event {
                onset_sample: onset,
                class: ClassLabel::parse(&class).map_err(py_err)?,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let rec = ContinuousRecording::new(array, fs, events, layout).map_err(py_err)?;
    let (set, _skips, _stats) =
        preprocess_recording(&rec, &cfg, subject, session).map_err(py_err)?;
    Ok(EpochSet { inner: set })
}

fn ndarray_from_flat(data: &[f64], c: usize, t: usize) -> ndarray::Array2<f64> {
    ndarray::Array2::from_shape_vec((c, t), data.to_vec()).expect("length checked")
}

/// Trains the conditional score model; returns `(final_loss, final_val_loss)`
/// and writes `ckpt_final.erpd` plus periodic checkpoints into `out_dir`.
#[pyfunction]
#[pyo3(signature = (data, out_dir, model_json = "{}", train_json = "{}", schedule_json = "{}", val_fraction = 0.1))]
fn train(
    data: &EpochSet,
    out_dir: PathBuf,
    model_json: &str,
    train_json: &str,
    schedule_json: &str,
    val_fraction: f64,
) -> PyResult<(f64, f64)> {
    let mut model: ModelConfig = parse_json("model config", model_json)?;
    model.in_channels = data.inner.n_channels();
    model.subjects = data.inner.subjects();
    model.sessions = data.inner.sessions();
    let train_cfg: TrainConfig = parse_json("train config", train_json)?;
    let schedule: CoreVpSchedule = parse_json("schedule", schedule_json)?;
    let (train_set, val_set) =
        split_train_val(&data.inner, val_fraction, train_cfg.seed).map_err(py_err)?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| PyIOError::new_err(format!("{}: {e}", out_dir.display())))?;
    let mut trainer = Trainer::new(model, schedule, train_cfg).map_err(py_err)?;
    let rows = trainer
        .run(&train_set, &val_set, Some(out_dir.as_path()))
        .map_err(py_err)?;
    trainer
        .save_checkpoint(&out_dir.join("ckpt_final.erpd"))
        .map_err(py_err)?;
    let last = rows.last().expect("steps >= 1");
    Ok((last.loss, last.val_loss.unwrap_or(f64::NAN)))
}

/// Samples a count-matched set for every condition present in `real`.
#[pyfunction]
#[pyo3(signature = (ckpt, real, sample_json = "{}", max_batch = 512))]
fn sample_matched_set(
    ckpt: PathBuf,
    real: &EpochSet,
    sample_json: &str,
    max_batch: usize,
) -> PyResult<EpochSet> {
    let cfg: SampleConfig = parse_json("sample config", sample_json)?;
    let (store, meta) = load_score_checkpoint(&ckpt).map_err(py_err)?;
    let set = sample_matched(&real.inner, &meta.model, &store, &meta.schedule, &cfg, max_batch)
        .map_err(py_err)?;
    Ok(EpochSet { inner: set })
}

/// Samples `count` epochs of one explicit condition.
#[pyfunction]
#[pyo3(signature = (ckpt, subject, session, class, count, sample_json = "{}", max_batch = 512))]
fn sample(
    ckpt: PathBuf,
    subject: u32,
    session: u32,
    class: &str,
    count: usize,
    sample_json: &str,
    max_batch: usize,
) -> PyResult<EpochSet> {
    let cfg: SampleConfig = parse_json("sample config", sample_json)?;
    let (store, meta) = load_score_checkpoint(&ckpt).map_err(py_err)?;
    let data = meta.data.as_ref().ok_or_else(|| {
        PyValueError::new_err("checkpoint lacks a data descriptor; use sample_matched_set")
    })?;
    let layout = ChannelLayout::new(data.channels.clone()).map_err(py_err)?;
    let cond = ConditionKey::real(subject, session, ClassLabel::parse(class).map_err(py_err)?);
    let set = sample_condition(
        &meta.model,
        &store,
        &meta.schedule,
        &cfg,
        cond,
        count,
        data.fs,
        &layout,
        data.epoch_len,
        max_batch,
    )
    .map_err(py_err)?;
    Ok(EpochSet { inner: set })
}

/// Runs the metric suite and returns the report as CSV text.
#[pyfunction]
#[pyo3(signature = (real, gen, metrics = "all", fx_path = None, options_json = "{}"))]
fn evaluate(
    real: &EpochSet,
    gen: &EpochSet,
    metrics: &str,
    fx_path: Option<PathBuf>,
    options_json: &str,
) -> PyResult<String> {
    #[derive(serde::Deserialize, Default)]
    #[serde(deny_unknown_fields, default)]
    struct Opts {
        n_projections: Option<usize>,
        seed: Option<u64>,
        peak_window: Option<(f64, f64)>,
        lda_gamma: Option<f64>,
        folds: Option<usize>,
    }
    let raw: Opts = parse_json("eval options", options_json)?;
    let mut opts = EvalOptions::default();
    if let Some(v) = raw.n_projections {
        opts.n_projections = v;
    }
    if let Some(v) = raw.seed {
        opts.seed = v;
    }
    if raw.peak_window.is_some() {
        opts.peak_window = raw.peak_window;
    }
    if raw.lda_gamma.is_some() {
        opts.lda_gamma = raw.lda_gamma;
    }
    if let Some(v) = raw.folds {
        opts.folds = v;
    }
    let kinds = MetricKind::parse_list(metrics).map_err(py_err)?;
    let fx = fx_path
        .map(|p| FeatureExtractor::load(Path::new(&p)).map_err(py_err))
        .transpose()?;
    let report =
        evaluate_sets(&real.inner, &gen.inner, &kinds, &opts, fx.as_ref()).map_err(py_err)?;
    Ok(report.to_csv())
}

/// Trains the FID feature extractor and saves its checkpoint; returns the
/// held-out balanced accuracy.
#[pyfunction]
#[pyo3(signature = (real, out_path, fx_json = "{}"))]
fn fit_feature_extractor(real: &EpochSet, out_path: PathBuf, fx_json: &str) -> PyResult<f64> {
    let cfg: FxConfig = parse_json("feature extractor config", fx_json)?;
    let fx = train_feature_extractor(&real.inner, &cfg).map_err(py_err)?;
    fx.save(&out_path).map_err(py_err)?;
    Ok(fx.meta.heldout_balanced_accuracy)
}

/// Sliced Wasserstein-2 distance between two sets.
#[pyfunction]
#[pyo3(signature = (a, b, n_projections = 128, seed = 0))]
fn swd_distance(a: &EpochSet, b: &EpochSet, n_projections: usize, seed: u64) -> PyResult<f64> {
    swd(&a.inner, &b.inner, n_projections, seed).map_err(py_err)
}

/// Standard-deviation Manhattan distance between two sets.
#[pyfunction]
fn sd_md_distance(a: &EpochSet, b: &EpochSet) -> PyResult<f64> {
    sd_md(&a.inner, &b.inner).map_err(py_err)
}

#[pymodule]
fn erpdiff_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<EpochSet>()?;
    m.add_class::<VpSchedule>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(sample_matched_set, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_feature_extractor, m)?)?;
    m.add_function(wrap_pyfunction!(swd_distance, m)?)?;
    m.add_function(wrap_pyfunction!(sd_md_distance, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
