//! Windowed-mean features and shrinkage-regularized LDA.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::Array2;

use crate::data::ClassLabel;
use crate::error::CoreError;
use crate::signal::EpochSet;
use crate::Result;

/// Per-epoch features: mean amplitude per channel within each of the eight
/// non-overlapping 0.1 s windows spanning 0.1–0.9 s. Window boundaries land
/// on `round(0.1·k·fs)`. Feature layout is window-major:
/// `[w1·ch0, w1·ch1, …, w8·chC-1]` → `8 × n_channels` features.
pub fn lda_features(set: &EpochSet) -> Result<(Array2<f64>, Vec<ClassLabel>)> {
    let fs = set.fs();
    let needed = (0.9 * fs).round() as usize;
    if set.epoch_len() < needed {
        return Err(CoreError::InvalidConfig(format!(
            "epochs of {} samples cannot cover 0.9 s at {fs} Hz ({needed} samples)",
            set.epoch_len()
        )));
    }
    let c = set.n_channels();
    let n = set.n_epochs();
    let mut x = Array2::zeros((n, 8 * c));
    let mut y = Vec::with_capacity(n);
    let bounds: Vec<usize> = (1..=9).map(|k| (0.1 * k as f64 * fs).round() as usize).collect();
    for (i, e) in set.epochs().iter().enumerate() {
        for w in 0..8 {
            let (a, b) = (bounds[w], bounds[w + 1]);
            for ch in 0..c {
                let mut acc = 0.0f64;
                for t in a..b {
                    acc += e.data[[ch, t]] as f64;
                }
                x[[i, w * c + ch]] = acc / (b - a) as f64;
            }
        }
        y.push(e.condition.class().ok_or_else(|| {
            CoreError::Condition("unconditional epoch has no class label".into())
        })?);
    }
    Ok((x, y))
}

/// Shrinkage LDA decision rule: `sign(wᵀx + b)`, positive → target.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
}

/// Ledoit–Wolf analytic shrinkage intensity toward the scaled identity,
/// estimated on rows already centered (their class mean removed).
fn ledoit_wolf_gamma(centered: &Array2<f64>) -> f64 {
    let (n, d) = centered.dim();
    if n < 2 {
        return 1.0;
    }
    let nf = n as f64;
    let df = d as f64;
    // S = XᵀX/n.
    let mut s = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        for a in 0..d {
            let xa = centered[[i, a]];
            for b in a..d {
                s[(a, b)] += xa * centered[[i, b]];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = s[(a, b)] / nf;
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    let mu = s.trace() / df;
    let s_fro_sq = s.iter().map(|v| v * v).sum::<f64>();
    // d² = ‖S − µI‖²_F / d.
    let d_sq = (s_fro_sq - 2.0 * mu * s.trace() + df * mu * mu) / df;
    if d_sq <= 0.0 {
        return 0.0;
    }
    // b̄² = (Σᵢ‖xᵢ‖⁴/n² − ‖S‖²_F/n) / d, clipped to d².
    let sum_norm4: f64 = (0..n)
        .map(|i| {
            let norm_sq: f64 = (0..d).map(|a| centered[[i, a]] * centered[[i, a]]).sum();
            norm_sq * norm_sq
        })
        .sum();
    let b_sq = ((sum_norm4 / (nf * nf) - s_fro_sq / nf) / df).max(0.0);
    (b_sq.min(d_sq) / d_sq).clamp(0.0, 1.0)
}

/// Fits LDA with pooled within-class covariance shrunk toward the scaled
/// identity: `Σ_γ = (1−γ)Σ̂ + γ·(tr Σ̂/d)·I`, `w = Σ_γ⁻¹(µ₁−µ₀)`, bias at
/// the projected class-mean midpoint. `γ = None` uses the Ledoit–Wolf
/// analytic estimate.
pub fn lda_fit(x: &Array2<f64>, y: &[ClassLabel], gamma: Option<f64>) -> Result<LdaModel> {
    let (n, d) = x.dim();
    if n != y.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "{n} feature rows but {} labels",
            y.len()
        )));
    }
    let idx1: Vec<usize> = (0..n).filter(|&i| y[i] == ClassLabel::Target).collect();
    let idx0: Vec<usize> = (0..n).filter(|&i| y[i] == ClassLabel::NonTarget).collect();
    if idx0.is_empty() || idx1.is_empty() {
        return Err(CoreError::Metric(
            "LDA needs both classes present in the training data".into(),
        ));
    }
    let mean_of = |idx: &[usize]| -> Vec<f64> {
        let mut m = vec![0.0; d];
        for &i in idx {
            for a in 0..d {
                m[a] += x[[i, a]];
            }
        }
        m.iter_mut().for_each(|v| *v /= idx.len() as f64);
        m
    };
    let mu0 = mean_of(&idx0);
    let mu1 = mean_of(&idx1);

    // Pool class-centered rows.
    let mut centered = Array2::zeros((n, d));
    for (i, row) in x.rows().into_iter().enumerate() {
        let mu = if y[i] == ClassLabel::Target { &mu1 } else { &mu0 };
        for a in 0..d {
            centered[[i, a]] = row[a] - mu[a];
        }
    }
    let gamma = match gamma {
        Some(g) => {
            if !(0.0..=1.0).contains(&g) {
                return Err(CoreError::InvalidConfig(format!(
                    "shrinkage γ must lie in [0, 1], got {g}"
                )));
            }
            g
        }
        None => ledoit_wolf_gamma(&centered),
    };

    // Σ_γ assembled densely.
    let nf = n as f64;
    let mut sigma = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        for a in 0..d {
            let xa = centered[[i, a]];
            for b in a..d {
                sigma[(a, b)] += xa * centered[[i, b]];
            }
        }
    }
    let mut trace = 0.0;
    for a in 0..d {
        trace += sigma[(a, a)] / nf;
    }
    let ridge = gamma * trace / d as f64;
    for a in 0..d {
        for b in a..d {
            let v = (1.0 - gamma) * sigma[(a, b)] / nf + if a == b { ridge } else { 0.0 };
            sigma[(a, b)] = v;
            sigma[(b, a)] = v;
        }
    }

    let diff = DVector::from_iterator(d, (0..d).map(|a| mu1[a] - mu0[a]));
    let chol = Cholesky::new(sigma).ok_or_else(|| {
        CoreError::Singular(
            "pooled covariance is singular; use shrinkage γ > 0 (or leave γ unset for the \
             Ledoit–Wolf estimate)"
                .into(),
        )
    })?;
    let w = chol.solve(&diff);
    let mid: f64 = (0..d).map(|a| w[a] * (mu0[a] + mu1[a]) * 0.5).sum();
    Ok(LdaModel {
        weights: w.iter().cloned().collect(),
        bias: -mid,
        gamma,
    })
}

impl LdaModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(row)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.bias
    }

    pub fn predict_row(&self, row: &[f64]) -> ClassLabel {
        if self.decision(row) > 0.0 {
            ClassLabel::Target
        } else {
            ClassLabel::NonTarget
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<ClassLabel> {
        x.rows()
            .into_iter()
            .map(|r| self.predict_row(r.as_slice().expect("row-major features")))
            .collect()
    }
}

/// Mean of per-class recalls.
pub fn balanced_accuracy(truth: &[ClassLabel], predicted: &[ClassLabel]) -> Result<f64> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(CoreError::Metric(format!(
            "balanced accuracy over {} truths and {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut hit = [0usize; 2];
    let mut total = [0usize; 2];
    for (&t, &p) in truth.iter().zip(predicted) {
        let k = t as usize;
        total[k] += 1;
        if t == p {
            hit[k] += 1;
        }
    }
    let mut acc = 0.0;
    let mut classes = 0usize;
    for k in 0..2 {
        if total[k] > 0 {
            acc += hit[k] as f64 / total[k] as f64;
            classes += 1;
        }
    }
    if classes == 0 {
        return Err(CoreError::Metric("no labeled examples".into()));
    }
    Ok(acc / classes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClassLabel, ConditionKey};
    use crate::signal::{ChannelLayout, Epoch, EpochSet};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn feature_count_and_boundaries() {
        let set = constant_set(19, 128, 128.0, 1.0, 3);
        let (x, y) = lda_features(&set).unwrap();
        assert_eq!(x.dim(), (3, 152));
        assert_eq!(y.len(), 3);
        // Boundary samples at 128 Hz: round(0.1·k·128) = 13, 26, 38, 51,
        // 64, 77, 90, 102, 115.
        let fs = 128.0;
        let bounds: Vec<usize> = (1..=9).map(|k| (0.1 * k as f64 * fs).round() as usize).collect();
        assert_eq!(bounds, vec![13, 26, 38, 51, 64, 77, 90, 102, 115]);
    }

    #[test]
    fn constant_epoch_gives_constant_features() {
        let set = constant_set(4, 64, 64.0, 2.5, 1);
        let (x, _) = lda_features(&set).unwrap();
        assert!(x.iter().all(|&v| (v - 2.5).abs() < 1e-6));
    }

    #[test]
    fn short_epochs_rejected() {
        let set = constant_set(4, 32, 64.0, 0.0, 1); // 0.5 s < 0.9 s
        assert!(lda_features(&set).is_err());
    }

    fn constant_set(c: usize, t: usize, fs: f64, v: f32, n: usize) -> EpochSet {
        let mut set = EpochSet::empty(fs, ChannelLayout::generic(c), t);
        for i in 0..n {
            let class = if i % 2 == 0 {
                ClassLabel::Target
            } else {
                ClassLabel::NonTarget
            };
            set.push(Epoch {
                data: ndarray::Array2::from_elem((c, t), v),
                condition: ConditionKey::real(1, 1, class),
            })
            .unwrap();
        }
        set
    }

    fn gaussian_classes(
        n_per: usize,
        d: usize,
        sep: f64,
        seed: u64,
    ) -> (Array2<f64>, Vec<ClassLabel>) {
        let mut rng = crate::seeding::rng_from(&[seed]);
        let mut x = Array2::zeros((2 * n_per, d));
        let mut y = Vec::new();
        for i in 0..2 * n_per {
            let target = i < n_per;
            for a in 0..d {
                let mean = if target && a == 0 { sep } else { 0.0 };
                x[[i, a]] = mean + rng.sample::<f64, _>(StandardNormal);
            }
            y.push(if target {
                ClassLabel::Target
            } else {
                ClassLabel::NonTarget
            });
        }
        (x, y)
    }

    #[test]
    fn separable_classes_reach_bayes_accuracy() {
        // Means 10σ apart → held-out balanced accuracy ≥ 0.999.
        let (xtr, ytr) = gaussian_classes(500, 8, 10.0, 1);
        let (xte, yte) = gaussian_classes(500, 8, 10.0, 2);
        let model = lda_fit(&xtr, &ytr, None).unwrap();
        let ba = balanced_accuracy(&yte, &model.predict(&xte)).unwrap();
        assert!(ba >= 0.999, "balanced accuracy {ba}");
    }

    #[test]
    fn shuffled_labels_sit_at_chance() {
        let mut accs = Vec::new();
        for rep in 0..20 {
            let (x, mut y) = gaussian_classes(250, 8, 10.0, 100 + rep);
            // Permute labels with a seeded shuffle.
            use rand::seq::SliceRandom;
            let mut rng = crate::seeding::rng_from(&[999, rep]);
            y.shuffle(&mut rng);
            let n = x.nrows();
            let split = n / 2;
            let xtr = x.slice(ndarray::s![..split, ..]).to_owned();
            let xte = x.slice(ndarray::s![split.., ..]).to_owned();
            let model = lda_fit(&xtr, &y[..split], None).unwrap();
            let ba = balanced_accuracy(&y[split..], &model.predict(&xte)).unwrap();
            accs.push(ba);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!(
            (mean - 0.5).abs() < 0.05,
            "chance-level accuracy drifted to {mean}"
        );
    }

    #[test]
    fn full_shrinkage_aligns_with_mean_difference() {
        let (x, y) = gaussian_classes(100, 6, 3.0, 7);
        let model = lda_fit(&x, &y, Some(1.0)).unwrap();
        // γ=1 → Σ ∝ I → w ∥ (µ₁−µ₀).
        let mut mu1 = vec![0.0; 6];
        let mut mu0 = vec![0.0; 6];
        let mut n1 = 0.0;
        let mut n0 = 0.0;
        for (i, &label) in y.iter().enumerate() {
            let (mu, n) = if label == ClassLabel::Target {
                (&mut mu1, &mut n1)
            } else {
                (&mut mu0, &mut n0)
            };
            *n += 1.0;
            for a in 0..6 {
                mu[a] += x[[i, a]];
            }
        }
        let diff: Vec<f64> = (0..6).map(|a| mu1[a] / n1 - mu0[a] / n0).collect();
        // Cosine similarity 1 up to float noise.
        let dot: f64 = model.weights.iter().zip(&diff).map(|(a, b)| a * b).sum();
        let na: f64 = model.weights.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((dot / (na * nb) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gamma_zero_with_degenerate_data_reports_singular() {
        // Two identical rows per class → rank-deficient covariance.
        let x = Array2::from_shape_vec(
            (4, 3),
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let y = vec![
            ClassLabel::Target,
            ClassLabel::Target,
            ClassLabel::NonTarget,
            ClassLabel::NonTarget,
        ];
        match lda_fit(&x, &y, Some(0.0)) {
            Err(CoreError::Singular(msg)) => assert!(msg.contains("γ > 0")),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn ledoit_wolf_gamma_in_bounds() {
        let (x, y) = gaussian_classes(30, 10, 2.0, 5);
        let model = lda_fit(&x, &y, None).unwrap();
        assert!((0.0..=1.0).contains(&model.gamma));
        assert!(model.gamma > 0.0, "LW should shrink with n=60, d=10");
    }

    #[test]
    fn missing_class_rejected() {
        let (x, _) = gaussian_classes(10, 4, 1.0, 3);
        let y = vec![ClassLabel::Target; 20];
        assert!(lda_fit(&x, &y, None).is_err());
    }
}
