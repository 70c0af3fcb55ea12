use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::NnError;

/// Handle to one tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable matrices.
///
/// Insertion order is the iteration order, which keeps optimizer updates and
/// serialized checkpoints deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    index: BTreeMap<String, ParamId>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SerializedParam {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Registers a tensor. Panics on duplicate names, which is a model-construction bug.
    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Array2::zeros((rows, cols)))
    }

    /// Xavier/Glorot uniform initialization.
    pub fn xavier(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        self.uniform(name, rows, cols, bound, rng)
    }

    pub fn uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let v = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound));
        self.add(name, v)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for v in &mut self.values {
            v.fill(value);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn to_serialized(&self) -> Vec<SerializedParam> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(name, v)| SerializedParam {
                name: name.clone(),
                rows: v.nrows(),
                cols: v.ncols(),
                data: v.iter().copied().collect(),
            })
            .collect()
    }

    /// Overwrites values from a serialized list. Names and shapes must match exactly.
    pub fn load_serialized(&mut self, items: &[SerializedParam]) -> Result<(), NnError> {
        if items.len() != self.values.len() {
            return Err(NnError::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.values.len(),
                items.len()
            )));
        }
        for item in items {
            let id = self
                .id(&item.name)
                .ok_or_else(|| NnError::Checkpoint(format!("unknown tensor {}", item.name)))?;
            let target = &mut self.values[id.0];
            if target.dim() != (item.rows, item.cols) || item.data.len() != item.rows * item.cols {
                return Err(NnError::Checkpoint(format!(
                    "shape mismatch for {}: expected {:?}, found ({}, {})",
                    item.name,
                    target.dim(),
                    item.rows,
                    item.cols
                )));
            }
            *target = Array2::from_shape_vec((item.rows, item.cols), item.data.clone())
                .map_err(|e| NnError::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }
}

/// Gradients for every parameter touched by a backward pass.
#[derive(Debug, Clone)]
pub struct Grads {
    pub(crate) grads: Vec<Option<Array2<f64>>>,
}

impl Grads {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self {
            grads: vec![None; params.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Adds another gradient set into this one.
    pub fn accumulate(&mut self, other: Grads) {
        for (mine, theirs) in self.grads.iter_mut().zip(other.grads) {
            match (mine.as_mut(), theirs) {
                (Some(m), Some(t)) => *m += &t,
                (None, Some(t)) => *mine = Some(t),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.mapv_inplace(|x| x * factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads
            .iter()
            .flatten()
            .all(|g| g.iter().all(|x| x.is_finite()))
    }
}
