//! Central finite-difference gradient checking (f64 only).
//!
//! The oracle is independent of the backward pass: it re-evaluates the loss
//! closure at perturbed inputs and compares `(f(x+h) − f(x−h)) / 2h` against
//! the analytic gradient elementwise.

use super::Tensor;

/// Relative error between a finite-difference estimate and an analytic
/// value; near-zero pairs are compared absolutely.
pub fn rel_err(fd: f64, an: f64) -> f64 {
    let denom = fd.abs().max(an.abs());
    if denom < 1e-7 {
        (fd - an).abs()
    } else {
        (fd - an).abs() / denom
    }
}

/// Max relative error over all elements of one tensor input.
///
/// `loss` must re-run the full forward pass from the given tensor value.
pub fn check_tensor(
    value: &Tensor<f64>,
    analytic_grad: &Tensor<f64>,
    h: f64,
    mut loss: impl FnMut(&Tensor<f64>) -> f64,
) -> f64 {
    assert_eq!(value.shape(), analytic_grad.shape(), "gradient shape drift");
    let mut worst = 0.0f64;
    let mut probe = value.clone();
    for i in 0..value.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = loss(&probe);
        probe.data_mut()[i] = orig - h;
        let down = loss(&probe);
        probe.data_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max(rel_err(fd, analytic_grad.data()[i]));
    }
    worst
}
