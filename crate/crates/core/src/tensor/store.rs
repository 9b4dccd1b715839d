//! Named parameter tensors with a parallel EMA shadow map.

use std::collections::BTreeMap;

use crate::error::CoreError;
use crate::Result;

use super::{Scalar, Tensor};

/// Trainable parameters plus their exponential-moving-average shadows.
/// Raw and shadow maps always share names and shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Tensor<T>>,
    ema: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
            ema: BTreeMap::new(),
        }
    }

    /// Registers a parameter; the shadow starts equal to the raw value.
    pub fn insert(&mut self, name: &str, value: Tensor<T>) {
        self.ema.insert(name.to_string(), value.clone());
        self.params.insert(name.to_string(), value);
    }

    /// Re-inserts a shadow tensor (checkpoint load path).
    pub fn insert_ema(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        match self.params.get(name) {
            Some(p) if p.shape() == value.shape() => {
                self.ema.insert(name.to_string(), value);
                Ok(())
            }
            Some(p) => Err(CoreError::ShapeMismatch(format!(
                "ema tensor {name:?} is {:?} but raw is {:?}",
                value.shape(),
                p.shape()
            ))),
            None => Err(CoreError::Condition(format!(
                "ema tensor {name:?} has no raw counterpart"
            ))),
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .ok_or_else(|| CoreError::Condition(format!("unknown parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| CoreError::Condition(format!("unknown parameter {name:?}")))
    }

    pub fn ema(&self, name: &str) -> Result<&Tensor<T>> {
        self.ema
            .get(name)
            .ok_or_else(|| CoreError::Condition(format!("unknown ema parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Sorted parameter names.
    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.params.iter()
    }

    pub fn iter_ema(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.ema.iter()
    }

    /// Total scalar count across raw parameters.
    pub fn n_scalars(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }

    /// `shadow ← decay·shadow + (1−decay)·raw`, per parameter.
    pub fn ema_update(&mut self, decay: f64) -> Result<()> {
        if !(0.0..1.0).contains(&decay) {
            return Err(CoreError::InvalidConfig(format!(
                "ema decay must lie in [0, 1), got {decay}"
            )));
        }
        let d = T::from_f64(decay);
        let one_minus = T::from_f64(1.0 - decay);
        for (name, shadow) in self.ema.iter_mut() {
            let raw = &self.params[name];
            for (s, &r) in shadow.data_mut().iter_mut().zip(raw.data()) {
                *s = d * *s + one_minus * r;
            }
        }
        Ok(())
    }

    /// A store whose raw parameters are the EMA shadows — what sampling
    /// should run on.
    pub fn ema_as_params(&self) -> ParamStore<T> {
        ParamStore {
            params: self.ema.clone(),
            ema: self.ema.clone(),
        }
    }

    /// Lossy element-type conversion (used by f64 gradient checks).
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
            ema: self.ema.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ema_converges_geometrically() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::scalar(0.0));
        // Move raw away from the shadow, then freeze it.
        *store.get_mut("w").unwrap() = Tensor::scalar(1.0);
        let decay = 0.9;
        let mut prev_gap = 1.0;
        for _ in 0..5 {
            store.ema_update(decay).unwrap();
            let gap = 1.0 - store.ema("w").unwrap().item();
            assert!((gap - prev_gap * decay).abs() < 1e-12);
            prev_gap = gap;
        }
    }

    #[test]
    fn ema_decay_zero_copies_raw() {
        let mut store = ParamStore::<f32>::new();
        store.insert("w", Tensor::scalar(2.0));
        *store.get_mut("w").unwrap() = Tensor::scalar(-3.5);
        store.ema_update(0.0).unwrap();
        assert_eq!(store.ema("w").unwrap().item(), -3.5);
    }

    #[test]
    fn ema_thousand_steps_of_0999() {
        // gap decays by 0.999^1000 ≈ e^-1 ≈ 0.368.
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::scalar(0.0));
        *store.get_mut("w").unwrap() = Tensor::scalar(1.0);
        for _ in 0..1000 {
            store.ema_update(0.999).unwrap();
        }
        let gap = 1.0 - store.ema("w").unwrap().item();
        assert!(
            (gap - (-1.0f64).exp()).abs() < 0.001,
            "gap {gap} vs e^-1 {}",
            (-1.0f64).exp()
        );
    }

    #[test]
    fn invalid_decay_rejected() {
        let mut store = ParamStore::<f32>::new();
        store.insert("w", Tensor::scalar(0.0));
        assert!(store.ema_update(1.0).is_err());
        assert!(store.ema_update(-0.1).is_err());
    }

    #[test]
    fn unknown_names_error() {
        let store = ParamStore::<f32>::new();
        assert!(store.get("nope").is_err());
    }
}
