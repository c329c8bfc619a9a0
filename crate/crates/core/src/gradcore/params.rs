use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;

/// Stable handle into a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of every learnable tensor in a model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// SHA-256 over names, shapes and little-endian payloads of the given blocks.
    pub fn digest(&self, ids: &[ParamId]) -> [u8; 32] {
        let mut h = Sha256::new();
        for &id in ids {
            h.update(self.names[id.0].as_bytes());
            for &d in self.tensors[id.0].shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in self.tensors[id.0].data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Boolean per-parameter selector of what a training phase may change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trainable(Vec<bool>);

impl Trainable {
    pub fn none(store: &ParamStore) -> Self {
        Trainable(vec![false; store.len()])
    }

    pub fn all(store: &ParamStore) -> Self {
        Trainable(vec![true; store.len()])
    }

    pub fn only(store: &ParamStore, ids: &[ParamId]) -> Self {
        let mut t = Self::none(store);
        for id in ids {
            t.0[id.0] = true;
        }
        t
    }

    pub fn contains(&self, id: ParamId) -> bool {
        self.0[id.0]
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &t)| t)
            .map(|(i, _)| ParamId(i))
            .collect()
    }
}

/// A graph plus the parameter bindings used to build it.
///
/// Each parameter is bound at most once per session, by reference, and only
/// parameters selected by the [`Trainable`] set require gradients.
pub struct Session<'a> {
    pub graph: Graph<'a>,
    store: &'a ParamStore,
    trainable: Option<&'a Trainable>,
    bound: HashMap<ParamId, NodeId>,
}

impl<'a> Session<'a> {
    /// Inference session: nothing requires gradients.
    pub fn frozen(store: &'a ParamStore) -> Self {
        Session {
            graph: Graph::default(),
            store,
            trainable: None,
            bound: HashMap::new(),
        }
    }

    pub fn training(store: &'a ParamStore, trainable: &'a Trainable) -> Self {
        Session {
            graph: Graph::default(),
            store,
            trainable: Some(trainable),
            bound: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.bound.get(&id) {
            return n;
        }
        let requires = self.trainable.is_some_and(|t| t.contains(id));
        let n = self.graph.leaf_ref(self.store.get(id), requires);
        self.bound.insert(id, n);
        n
    }

    /// Gradients of every bound trainable parameter, in parameter order.
    pub fn grads(&self) -> Vec<(ParamId, Vec<f64>)> {
        let mut out: Vec<(ParamId, Vec<f64>)> = self
            .bound
            .iter()
            .filter(|(_, &n)| self.graph.requires_grad(n))
            .map(|(&id, &n)| (id, self.graph.grad_or_zeros(n)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

/// Per-parameter gradient accumulator across samples of a batch.
#[derive(Debug, Clone)]
pub struct GradBuffer {
    slots: Vec<Option<Vec<f64>>>,
}

impl GradBuffer {
    pub fn new(store: &ParamStore) -> Self {
        GradBuffer {
            slots: vec![None; store.len()],
        }
    }

    pub fn accumulate(&mut self, grads: &[(ParamId, Vec<f64>)], weight: f64) {
        for (id, g) in grads {
            let slot = self.slots[id.0].get_or_insert_with(|| vec![0.0; g.len()]);
            slot.iter_mut().zip(g).for_each(|(a, b)| *a += weight * b);
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.slots[id.0].as_deref()
    }

    pub fn is_finite(&self) -> bool {
        self.slots
            .iter()
            .flatten()
            .all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.slots
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_deref().map(|g| (ParamId(i), g)))
    }
}
