//! Sliced Wasserstein-2 distance over flattened epochs.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::CoreError;
use crate::seeding;
use crate::signal::EpochSet;
use crate::Result;

/// Linear-interpolated quantile of a sorted slice at `q ∈ (0, 1)`.
/// For `len == n` and `q = (i+0.5)/n` this returns `sorted[i]` exactly.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let p = (q * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let lo = p.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = p - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Squared 1-D Wasserstein-2 via sorted quantile matching, interpolating
/// both samples onto the quantile grid of the smaller one.
fn w2_squared_1d(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite projections"));
    b.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite projections"));
    let n = a.len().min(b.len());
    let mut acc = 0.0;
    for i in 0..n {
        let q = (i as f64 + 0.5) / n as f64;
        let d = quantile(&a, q) - quantile(&b, q);
        acc += d * d;
    }
    acc / n as f64
}

/// Sliced Wasserstein-2: epochs flattened to `C·T` vectors, projected onto
/// `n_projections` random unit directions; returns
/// `sqrt(mean of squared 1-D W2)`. Projection `p` draws its direction from
/// a stream seeded by `(seed, p)`, so the estimate is identical however the
/// projections are scheduled.
pub fn swd(a: &EpochSet, b: &EpochSet, n_projections: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::Metric("swd requires non-empty sets".into()));
    }
    if a.n_channels() != b.n_channels() || a.epoch_len() != b.epoch_len() {
        return Err(CoreError::ShapeMismatch(format!(
            "swd: {}×{} vs {}×{} epochs",
            a.n_channels(),
            a.epoch_len(),
            b.n_channels(),
            b.epoch_len()
        )));
    }
    if n_projections == 0 {
        return Err(CoreError::InvalidConfig(
            "swd needs at least one projection".into(),
        ));
    }
    let d = a.n_channels() * a.epoch_len();
    let flat = |s: &EpochSet| -> Vec<Vec<f64>> {
        s.epochs()
            .iter()
            .map(|e| e.data.iter().map(|&v| v as f64).collect())
            .collect()
    };
    let fa = flat(a);
    let fb = flat(b);

    let total: f64 = (0..n_projections)
        .into_par_iter()
        .map(|p| {
            let mut rng = seeding::rng_from(&[seed, p as u64, 0x737764]);
            let mut theta: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                theta.iter_mut().for_each(|v| *v /= norm);
            }
            let project = |rows: &[Vec<f64>]| -> Vec<f64> {
                rows.iter()
                    .map(|r| r.iter().zip(&theta).map(|(x, t)| x * t).sum())
                    .collect()
            };
            w2_squared_1d(project(&fa), project(&fb))
        })
        .sum();
    Ok((total / n_projections as f64).sqrt())
}
