//! Adam with bias correction.

use std::collections::BTreeMap;

use crate::error::CoreError;
use crate::Result;

use super::{ParamStore, Scalar, Tensor};

/// Standard Adam; moment state is created lazily at zero on first use.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Tensor<T>>,
    v: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(CoreError::InvalidConfig(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        Ok(Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update from named gradients. Parameters without a
    /// gradient entry are left untouched.
    pub fn step(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &BTreeMap<String, Tensor<T>>,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_m_b1 = T::from_f64(1.0 - self.beta1);
        let one_m_b2 = T::from_f64(1.0 - self.beta2);
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        let inv_bc1 = T::from_f64(1.0 / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);

        for (name, g) in grads {
            let p = store.get_mut(name)?;
            if g.shape() != p.shape() {
                return Err(CoreError::ShapeMismatch(format!(
                    "gradient for {name:?} is {:?} but parameter is {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            for i in 0..g.numel() {
                let gi = g.data()[i];
                let mi = b1 * m.data()[i] + one_m_b1 * gi;
                let vi = b2 * v.data()[i] + one_m_b2 * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let mhat = mi * inv_bc1;
                let vhat = vi * inv_bc2;
                let pd = p.data_mut();
                pd[i] = pd[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
