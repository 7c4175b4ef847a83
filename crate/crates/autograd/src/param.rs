//! Named parameter registry.
//!
//! Models register every learnable tensor here under a unique dotted path
//! (for example `enc.diseases.layer0.attn.wq`). Registration order is
//! preserved and is the iteration order everywhere — optimizers, checkpoints,
//! and reports all see parameters in the same deterministic sequence.

use std::collections::HashMap;

use crate::error::TensorError;
use crate::tensor::Tensor;

pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    /// Frozen parameters (for example a fixed sinusoidal position table) are
    /// saved and loaded but skipped by optimizers.
    pub trainable: bool,
}

#[derive(Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a trainable tensor; returns a handle sharing its storage.
    pub fn register(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<Tensor, TensorError> {
        self.insert(name.into(), tensor, true)
    }

    /// Register a tensor that persists in checkpoints but never trains.
    pub fn register_frozen(
        &mut self,
        name: impl Into<String>,
        tensor: Tensor,
    ) -> Result<Tensor, TensorError> {
        self.insert(name.into(), tensor, false)
    }

    fn insert(&mut self, name: String, tensor: Tensor, trainable: bool) -> Result<Tensor, TensorError> {
        if self.index.contains_key(&name) {
            return Err(TensorError::DuplicateParam(name));
        }
        if trainable && !tensor.requires_grad() {
            return Err(TensorError::contract(
                "register",
                format!("parameter {name:?} does not require gradient"),
            ));
        }
        let handle = tensor.clone();
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Parameter {
            name,
            tensor,
            trainable,
        });
        Ok(handle)
    }

    pub fn get(&self, name: &str) -> Result<&Parameter, TensorError> {
        self.index
            .get(name)
            .map(|&i| &self.params[i])
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// All parameters in registration order.
    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_trainable(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter().filter(|p| p.trainable)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of stored scalar values.
    pub fn value_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn zero_grads(&self) {
        for p in &self.params {
            p.tensor.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = ParamStore::new();
        store
            .register("w", Tensor::trainable(1, 1, vec![0.0]).unwrap())
            .unwrap();
        let err = store
            .register("w", Tensor::trainable(1, 1, vec![0.0]).unwrap())
            .unwrap_err();
        assert!(matches!(err, TensorError::DuplicateParam(_)));
    }

    #[test]
    fn registration_order_is_iteration_order() {
        let mut store = ParamStore::new();
        for name in ["b", "a", "c"] {
            store
                .register(name, Tensor::trainable(1, 1, vec![0.0]).unwrap())
                .unwrap();
        }
        let names: Vec<&str> = store.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, vec!["b", "a", "c"]);
    }

    #[test]
    fn handles_share_storage_with_the_store() {
        let mut store = ParamStore::new();
        let handle = store
            .register("w", Tensor::trainable(1, 2, vec![1.0, 2.0]).unwrap())
            .unwrap();
        handle.set_values(&[5.0, 6.0]).unwrap();
        assert_eq!(store.get("w").unwrap().tensor.to_vec(), vec![5.0, 6.0]);
    }

    #[test]
    fn frozen_params_are_not_trainable() {
        let mut store = ParamStore::new();
        store
            .register_frozen("pos", Tensor::zeros(4, 2))
            .unwrap();
        assert_eq!(store.iter_trainable().count(), 0);
        assert_eq!(store.len(), 1);
    }
}
