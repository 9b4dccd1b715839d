//! FFT-based resampling (spectral truncation) with event remapping.

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::CoreError;
use crate::Result;

use super::{ContinuousRecording, Event};

/// Resamples every channel to `fs_out` and remaps event onsets as
/// `round(onset × fs_out / fs_in)` (half away from zero). The input must
/// already be band-limited below `fs_out / 2`; the pipeline's bandpass
/// guarantees this.
pub fn downsample(rec: &ContinuousRecording, fs_out: f64) -> Result<ContinuousRecording> {
    if fs_out >= rec.fs {
        return Err(CoreError::InvalidConfig(format!(
            "fs_out {} must be below input rate {}",
            fs_out, rec.fs
        )));
    }
    if fs_out <= 0.0 {
        return Err(CoreError::InvalidConfig("fs_out must be positive".into()));
    }
    let n_in = rec.n_samples();
    let n_out = (n_in as f64 * fs_out / rec.fs).round() as usize;
    if n_out == 0 {
        return Err(CoreError::InvalidConfig(
            "recording too short to resample".into(),
        ));
    }

    let mut planner = FftPlanner::<f64>::new();
    let fft_fwd = planner.plan_fft_forward(n_in);
    let fft_inv = planner.plan_fft_inverse(n_out);

    let mut out = Array2::zeros((rec.n_channels(), n_out));
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n_in];
    let mut truncated = vec![Complex64::new(0.0, 0.0); n_out];
    for (ch, row) in rec.data.rows().into_iter().enumerate() {
        for (dst, &v) in spectrum.iter_mut().zip(row.iter()) {
            *dst = Complex64::new(v, 0.0);
        }
        fft_fwd.process(&mut spectrum);

        truncated.iter_mut().for_each(|c| *c = Complex64::ZERO);
        truncated[0] = spectrum[0];
        let half = n_out / 2;
        for k in 1..half + (n_out % 2) {
            truncated[k] = spectrum[k];
            truncated[n_out - k] = spectrum[n_in - k];
        }
        if n_out % 2 == 0 {
            // Fold the output Nyquist bin so the result stays real.
            truncated[half] = Complex64::new((spectrum[half] + spectrum[n_in - half]).re, 0.0);
        }

        fft_inv.process(&mut truncated);
        let scale = 1.0 / n_in as f64;
        for (dst, c) in out.row_mut(ch).iter_mut().zip(truncated.iter()) {
            *dst = c.re * scale;
        }
    }

    let ratio = fs_out / rec.fs;
    let events = rec
        .events
        .iter()
        .filter_map(|ev| {
            let mapped = (ev.onset_sample as f64 * ratio).round() as usize;
            (mapped < n_out).then_some(Event {
                onset_sample: mapped,
                class: ev.class,
            })
        })
        .collect();

    ContinuousRecording::new(out, fs_out, events, rec.layout.clone())
}
