//! Butterworth bandpass design (bilinear transform, second-order sections)
//! and zero-phase forward-backward application.

use ndarray::Array2;
use rustfft::num_complex::Complex64;

use crate::error::CoreError;
use crate::Result;

use super::{ContinuousRecording, PreprocessConfig};

/// One biquad section, direct form II transposed coefficients.
/// Denominator is normalised (`a0 == 1`).
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

/// A designed Butterworth bandpass as a cascade of biquads.
#[derive(Debug, Clone)]
pub struct BandpassSos {
    sections: Vec<Biquad>,
    /// Prototype order used at design time (pad length depends on it).
    order: usize,
}

impl BandpassSos {
    /// Designs an order-`order` Butterworth prototype transformed to a
    /// bandpass with −3 dB points at `lo` and `hi` Hz, discretised with the
    /// bilinear transform at rate `fs`.
    pub fn design(order: usize, lo: f64, hi: f64, fs: f64) -> Result<Self> {
        if order < 2 || order % 2 != 0 {
            return Err(CoreError::InvalidConfig(format!(
                "filter order must be even and ≥ 2, got {order}"
            )));
        }
        if !(0.0 < lo && lo < hi && hi < fs / 2.0) {
            return Err(CoreError::InvalidConfig(format!(
                "passband {lo}..{hi} Hz infeasible at fs {fs} Hz"
            )));
        }

        let fs2 = 2.0 * fs;
        // Prewarped analog edges.
        let w1 = fs2 * (std::f64::consts::PI * lo / fs).tan();
        let w2 = fs2 * (std::f64::consts::PI * hi / fs).tan();
        let bw = w2 - w1;
        let w0 = (w1 * w2).sqrt();

        // Unit-cutoff Butterworth prototype poles.
        let proto: Vec<Complex64> = (0..order)
            .map(|k| {
                let theta = std::f64::consts::PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
                Complex64::new(theta.cos(), theta.sin())
            })
            .collect();

        // Lowpass → bandpass: each prototype pole produces two poles.
        let mut poles: Vec<Complex64> = Vec::with_capacity(2 * order);
        for &p in &proto {
            let half = p * (bw / 2.0);
            let disc = (half * half - Complex64::new(w0 * w0, 0.0)).sqrt();
            poles.push(half + disc);
            poles.push(half - disc);
        }
        // Analog zeros: `order` zeros at s = 0; gain bw^order.
        let gain_analog = bw.powi(order as i32);

        // Bilinear transform. Analog zeros at 0 map to z = +1; the `order`
        // zeros at infinity map to z = −1.
        let mut gain_num = Complex64::new(1.0, 0.0);
        let mut gain_den = Complex64::new(1.0, 0.0);
        for _ in 0..order {
            gain_num *= Complex64::new(fs2, 0.0); // fs2 − 0
        }
        let z_poles: Vec<Complex64> = poles
            .iter()
            .map(|&p| {
                gain_den *= Complex64::new(fs2, 0.0) - p;
                (Complex64::new(fs2, 0.0) + p) / (Complex64::new(fs2, 0.0) - p)
            })
            .collect();
        let gain = gain_analog * (gain_num / gain_den).re;

        // Group digital poles into conjugate pairs; each section takes one
        // zero at +1 and one at −1: numerator (z−1)(z+1) → [1, 0, −1].
        let mut complex_poles: Vec<Complex64> = Vec::new();
        let mut real_poles: Vec<f64> = Vec::new();
        for &p in &z_poles {
            if p.im > 1e-10 {
                complex_poles.push(p);
            } else if p.im >= -1e-10 {
                real_poles.push(p.re);
            }
        }
        let n_sections = order;
        let mut denoms: Vec<(f64, f64)> = complex_poles
            .iter()
            .map(|p| (-2.0 * p.re, p.norm_sqr()))
            .collect();
        let mut reals = real_poles.into_iter();
        while let (Some(p), Some(q)) = (reals.next(), reals.next()) {
            denoms.push((-(p + q), p * q));
        }
        if denoms.len() != n_sections {
            return Err(CoreError::InvalidConfig(format!(
                "pole pairing produced {} sections, expected {n_sections}",
                denoms.len()
            )));
        }

        // Spread the gain evenly across sections for numeric headroom.
        let sec_gain = gain.abs().powf(1.0 / n_sections as f64);
        let sign = if gain < 0.0 { -1.0 } else { 1.0 };
        let sections = denoms
            .into_iter()
            .enumerate()
            .map(|(i, (a1, a2))| {
                let g = if i == 0 { sign * sec_gain } else { sec_gain };
                Biquad {
                    b0: g,
                    b1: 0.0,
                    b2: -g,
                    a1,
                    a2,
                }
            })
            .collect();

        Ok(BandpassSos { sections, order })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Exact magnitude response of the cascade at frequency `f` Hz.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f / fs;
        let z1 = Complex64::new(w.cos(), -w.sin());
        let z2 = z1 * z1;
        let mut h = Complex64::new(1.0, 0.0);
        for s in &self.sections {
            let num = Complex64::new(s.b0, 0.0) + z1 * s.b1 + z2 * s.b2;
            let den = Complex64::new(1.0, 0.0) + z1 * s.a1 + z2 * s.a2;
            h *= num / den;
        }
        h.norm()
    }
}

/// Closed-form Butterworth bandpass magnitude at `f` Hz for a bilinear
/// design with prewarped edges — the analytic oracle the implementation is
/// checked against.
pub fn butterworth_bandpass_gain(order: usize, lo: f64, hi: f64, fs: f64, f: f64) -> f64 {
    let fs2 = 2.0 * fs;
    let warp = |x: f64| fs2 * (std::f64::consts::PI * x / fs).tan();
    let w1 = warp(lo);
    let w2 = warp(hi);
    let w = warp(f);
    let bw = w2 - w1;
    let w0sq = w1 * w2;
    // Bandpass frequency variable of the unit prototype.
    let omega = (w * w - w0sq) / (bw * w);
    1.0 / (1.0 + omega.powi(2 * order as i32)).sqrt()
}

/// Runs the cascade once, forward in time, from zero initial state.
pub fn sosfilt_forward(sos: &BandpassSos, x: &[f64]) -> Vec<f64> {
    let mut y: Vec<f64> = x.to_vec();
    for s in &sos.sections {
        let mut z1 = 0.0f64;
        let mut z2 = 0.0f64;
        for v in y.iter_mut() {
            let xin = *v;
            let out = s.b0 * xin + z1;
            z1 = s.b1 * xin - s.a1 * out + z2;
            z2 = s.b2 * xin - s.a2 * out;
            *v = out;
        }
    }
    y
}

/// Zero-phase application: reflect-pad by 3× the prototype order, filter
/// forward and backward, strip the padding.
pub fn filtfilt(sos: &BandpassSos, x: &[f64]) -> Vec<f64> {
    let pad = (3 * sos.order).min(x.len().saturating_sub(1));
    let mut padded = Vec::with_capacity(x.len() + 2 * pad);
    for i in (1..=pad).rev() {
        padded.push(x[i]);
    }
    padded.extend_from_slice(x);
    for i in 0..pad {
        padded.push(x[x.len() - 2 - i]);
    }

    let mut fwd = sosfilt_forward(sos, &padded);
    fwd.reverse();
    let mut back = sosfilt_forward(sos, &fwd);
    back.reverse();
    back[pad..pad + x.len()].to_vec()
}

/// Filters every channel of a recording with a zero-phase Butterworth
/// bandpass. Sampling rate and events are unchanged.
pub fn bandpass_filter(
    rec: &ContinuousRecording,
    cfg: &PreprocessConfig,
) -> Result<ContinuousRecording> {
    if rec.data.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite(
            "recording contains non-finite samples".into(),
        ));
    }
    if cfg.band_hi >= rec.fs / 2.0 {
        return Err(CoreError::InvalidConfig(format!(
            "band_hi {} infeasible at fs {} Hz",
            cfg.band_hi, rec.fs
        )));
    }
    let sos = BandpassSos::design(cfg.filter_order, cfg.band_lo, cfg.band_hi, rec.fs)?;
    let mut out = Array2::zeros(rec.data.raw_dim());
    for (i, row) in rec.data.rows().into_iter().enumerate() {
        let filtered = filtfilt(&sos, row.as_slice().expect("recording rows are contiguous"));
        out.row_mut(i)
            .iter_mut()
            .zip(filtered)
            .for_each(|(dst, v)| *dst = v);
    }
    ContinuousRecording::new(out, rec.fs, rec.events.clone(), rec.layout.clone())
}
