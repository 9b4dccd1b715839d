//! Epoch data model and the deterministic preprocessing chain.
//!
//! Pipeline order is fixed: bandpass filter → downsample → epoch → reject.
//! Every step is a pure function over immutable inputs, so recordings can be
//! processed in parallel without shared state.

mod filter;
mod resample;

pub use filter::{bandpass_filter, butterworth_bandpass_gain, filtfilt, sosfilt_forward, BandpassSos};
pub use resample::downsample;

use ndarray::Array2;

use crate::data::{ClassLabel, ConditionKey};
use crate::error::CoreError;
use crate::Result;

/// The 19-channel full-scalp layout used throughout.
pub const STANDARD_19: [&str; 19] = [
    "Fp1", "Fp2", "F7", "F8", "F3", "F4", "Fz", "T7", "T8", "C3", "C4", "Cz", "P7", "P8", "P3",
    "P4", "Pz", "O1", "O2",
];

/// Ordered, unique channel labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelLayout {
    names: Vec<String>,
}

impl ChannelLayout {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(CoreError::InvalidConfig("channel layout is empty".into()));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(CoreError::InvalidConfig(format!(
                    "duplicate channel name {a:?}"
                )));
            }
        }
        Ok(ChannelLayout { names })
    }

    /// The built-in 19-channel layout.
    pub fn standard_19() -> Self {
        ChannelLayout {
            names: STANDARD_19.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Anonymous layout `ch0..chN-1`, handy for synthetic data.
    pub fn generic(count: usize) -> Self {
        ChannelLayout {
            names: (0..count).map(|i| format!("ch{i}")).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A stimulus event in a continuous recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub onset_sample: usize,
    pub class: ClassLabel,
}

/// Continuous multichannel signal in µV with stimulus events.
#[derive(Debug, Clone)]
pub struct ContinuousRecording {
    /// `[channels × samples]`, µV.
    pub data: Array2<f64>,
    /// Sampling rate, Hz.
    pub fs: f64,
    pub events: Vec<Event>,
    pub layout: ChannelLayout,
}

impl ContinuousRecording {
    pub fn new(
        data: Array2<f64>,
        fs: f64,
        events: Vec<Event>,
        layout: ChannelLayout,
    ) -> Result<Self> {
        if fs <= 0.0 {
            return Err(CoreError::InvalidConfig(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if data.nrows() != layout.count() {
            return Err(CoreError::ShapeMismatch(format!(
                "recording has {} rows but layout declares {} channels",
                data.nrows(),
                layout.count()
            )));
        }
        let n = data.ncols();
        for ev in &events {
            if ev.onset_sample >= n {
                return Err(CoreError::InvalidConfig(format!(
                    "event onset {} outside recording of {} samples",
                    ev.onset_sample, n
                )));
            }
        }
        Ok(ContinuousRecording {
            data,
            fs,
            events,
            layout,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }
}

/// One fixed-shape epoch with its condition key.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    /// `[channels × samples]`, µV.
    pub data: Array2<f32>,
    pub condition: ConditionKey,
}

/// A collection of fixed-shape epochs sharing one layout and sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    epochs: Vec<Epoch>,
    fs: f64,
    layout: ChannelLayout,
    epoch_len: usize,
}

impl EpochSet {
    pub fn empty(fs: f64, layout: ChannelLayout, epoch_len: usize) -> Self {
        EpochSet {
            epochs: Vec::new(),
            fs,
            layout,
            epoch_len,
        }
    }

    pub fn new(
        epochs: Vec<Epoch>,
        fs: f64,
        layout: ChannelLayout,
        epoch_len: usize,
    ) -> Result<Self> {
        let mut set = EpochSet::empty(fs, layout, epoch_len);
        for e in epochs {
            set.push(e)?;
        }
        Ok(set)
    }

    /// Appends an epoch after shape and finiteness checks.
    pub fn push(&mut self, epoch: Epoch) -> Result<()> {
        if epoch.data.nrows() != self.layout.count() || epoch.data.ncols() != self.epoch_len {
            return Err(CoreError::ShapeMismatch(format!(
                "epoch is {}×{} but set expects {}×{}",
                epoch.data.nrows(),
                epoch.data.ncols(),
                self.layout.count(),
                self.epoch_len
            )));
        }
        if epoch.data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(format!(
                "epoch for {} contains non-finite samples",
                epoch.condition
            )));
        }
        self.epochs.push(epoch);
        Ok(())
    }

    pub fn epochs(&self) -> &[Epoch] {
        &self.epochs
    }

    pub fn n_epochs(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn layout(&self) -> &ChannelLayout {
        &self.layout
    }

    pub fn n_channels(&self) -> usize {
        self.layout.count()
    }

    pub fn epoch_len(&self) -> usize {
        self.epoch_len
    }

    /// Distinct real condition keys, sorted.
    pub fn conditions(&self) -> Vec<ConditionKey> {
        let mut keys: Vec<ConditionKey> = self.epochs.iter().map(|e| e.condition).collect();
        keys.sort();
        keys.dedup();
        keys
    }

    /// Distinct subject ids, sorted.
    pub fn subjects(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .epochs
            .iter()
            .filter_map(|e| e.condition.subject())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Distinct session ids, sorted.
    pub fn sessions(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .epochs
            .iter()
            .filter_map(|e| e.condition.session())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Indices of epochs matching a predicate on the condition key.
    pub fn indices_where(&self, mut pred: impl FnMut(ConditionKey) -> bool) -> Vec<usize> {
        self.epochs
            .iter()
            .enumerate()
            .filter(|(_, e)| pred(e.condition))
            .map(|(i, _)| i)
            .collect()
    }

    /// New set holding clones of the epochs at `indices`.
    pub fn subset(&self, indices: &[usize]) -> EpochSet {
        EpochSet {
            epochs: indices.iter().map(|&i| self.epochs[i].clone()).collect(),
            fs: self.fs,
            layout: self.layout.clone(),
            epoch_len: self.epoch_len,
        }
    }

    /// Epochs of one exact condition.
    pub fn of_condition(&self, key: ConditionKey) -> EpochSet {
        self.subset(&self.indices_where(|c| c == key))
    }

    pub fn count_condition(&self, key: ConditionKey) -> usize {
        self.epochs.iter().filter(|e| e.condition == key).count()
    }
}

/// Preprocessing parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Passband low edge, Hz.
    pub band_lo: f64,
    /// Passband high edge, Hz.
    pub band_hi: f64,
    /// Butterworth prototype order (even, ≥ 2).
    pub filter_order: usize,
    /// Output sampling rate, Hz.
    pub fs_out: f64,
    /// Epoch window length, seconds.
    pub epoch_seconds: f64,
    /// Peak-to-peak rejection threshold, µV.
    pub ptp_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            band_lo: 1.0,
            band_hi: 40.0,
            filter_order: 4,
            fs_out: 128.0,
            epoch_seconds: 1.0,
            ptp_threshold: 150.0,
        }
    }
}

impl PreprocessConfig {
    /// Validates the config against an input sampling rate.
    pub fn validate(&self, fs_in: f64) -> Result<()> {
        if !(self.band_lo > 0.0 && self.band_lo < self.band_hi) {
            return Err(CoreError::InvalidConfig(format!(
                "passband must satisfy 0 < lo < hi, got {}..{}",
                self.band_lo, self.band_hi
            )));
        }
        if self.band_hi >= self.fs_out / 2.0 {
            return Err(CoreError::InvalidConfig(format!(
                "band_hi {} must stay below fs_out/2 = {}",
                self.band_hi,
                self.fs_out / 2.0
            )));
        }
        if self.band_hi >= fs_in / 2.0 {
            return Err(CoreError::InvalidConfig(format!(
                "band_hi {} infeasible for input rate {} Hz",
                self.band_hi, fs_in
            )));
        }
        if self.filter_order < 2 || self.filter_order % 2 != 0 {
            return Err(CoreError::InvalidConfig(format!(
                "filter_order must be even and ≥ 2, got {}",
                self.filter_order
            )));
        }
        if self.ptp_threshold <= 0.0 {
            return Err(CoreError::InvalidConfig(
                "ptp_threshold must be positive".into(),
            ));
        }
        if self.epoch_seconds <= 0.0 {
            return Err(CoreError::InvalidConfig(
                "epoch_seconds must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Epoch length in samples at the output rate.
    pub fn epoch_len(&self) -> usize {
        (self.epoch_seconds * self.fs_out).round() as usize
    }
}

/// Events skipped because the window would overrun the recording.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipReport {
    pub kept: usize,
    pub skipped: usize,
}

/// Slices one epoch per event; events too close to the recording end are
/// skipped and counted.
pub fn epoch(
    rec: &ContinuousRecording,
    cfg: &PreprocessConfig,
    subject: u32,
    session: u32,
) -> Result<(EpochSet, SkipReport)> {
    let epoch_len = (cfg.epoch_seconds * rec.fs).round() as usize;
    if epoch_len == 0 {
        return Err(CoreError::InvalidConfig(
            "epoch window must span at least one sample".into(),
        ));
    }
    let n = rec.n_samples();
    let mut set = EpochSet::empty(rec.fs, rec.layout.clone(), epoch_len);
    let mut report = SkipReport::default();
    for ev in &rec.events {
        if ev.onset_sample + epoch_len > n {
            report.skipped += 1;
            continue;
        }
        let slice = rec
            .data
            .slice(ndarray::s![.., ev.onset_sample..ev.onset_sample + epoch_len])
            .mapv(|v| v as f32);
        set.push(Epoch {
            data: slice,
            condition: ConditionKey::real(subject, session, ev.class),
        })?;
        report.kept += 1;
    }
    Ok((set, report))
}

/// Kept/dropped bookkeeping from peak-to-peak rejection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RejectionStats {
    pub kept: usize,
    pub dropped: usize,
}

impl RejectionStats {
    pub fn total(&self) -> usize {
        self.kept + self.dropped
    }

    /// Fraction of epochs dropped; 0 for an empty input.
    pub fn fraction_dropped(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.dropped as f64 / self.total() as f64
        }
    }
}

/// Largest per-channel peak-to-peak span of an epoch, µV.
pub fn peak_to_peak(data: &Array2<f32>) -> f64 {
    let mut worst = 0.0f64;
    for row in data.rows() {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in row {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        worst = worst.max((hi - lo) as f64);
    }
    worst
}

/// Drops every epoch whose worst-channel peak-to-peak span exceeds the
/// threshold. Retained epochs are byte-identical to the input.
pub fn reject_ptp(set: &EpochSet, threshold_uv: f64) -> Result<(EpochSet, RejectionStats)> {
    if threshold_uv <= 0.0 {
        return Err(CoreError::InvalidConfig(
            "rejection threshold must be positive".into(),
        ));
    }
    let mut kept = EpochSet::empty(set.fs, set.layout.clone(), set.epoch_len);
    let mut stats = RejectionStats::default();
    for e in &set.epochs {
        if peak_to_peak(&e.data) > threshold_uv {
            stats.dropped += 1;
        } else {
            kept.epochs.push(e.clone());
            stats.kept += 1;
        }
    }
    Ok((kept, stats))
}

/// Full fixed-order chain for one recording:
/// filter → downsample → epoch → reject.
pub fn preprocess_recording(
    rec: &ContinuousRecording,
    cfg: &PreprocessConfig,
    subject: u32,
    session: u32,
) -> Result<(EpochSet, SkipReport, RejectionStats)> {
    cfg.validate(rec.fs)?;
    let filtered = bandpass_filter(rec, cfg)?;
    let resampled = downsample(&filtered, cfg.fs_out)?;
    let (set, skips) = epoch(&resampled, cfg, subject, session)?;
    let (kept, stats) = reject_ptp(&set, cfg.ptp_threshold)?;
    Ok((kept, skips, stats))
}

#[cfg(test)]
mod tests;
