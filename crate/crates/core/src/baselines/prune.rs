//! Magnitude pruning of the transformer's linear layers.

use crate::error::{Error, Result};
use crate::gradcore::{ParamId, ParamStore};
use crate::model::Model;

/// Weights left nonzero in a layer of `count`: `ceil((1 − ratio) · count)`.
pub fn kept_weights(count: usize, ratio: f64) -> usize {
    (((1.0 - ratio) * count as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Zeroes the smallest-magnitude weights of each layer in `layers` (lower
/// index first on ties) so that `ceil((1 − ratio) · count)` remain.
pub fn prune_layers(store: &mut ParamStore, layers: &[ParamId], ratio: f64) -> Result<()> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Config(format!("prune ratio {ratio} outside [0, 1)")));
    }
    for &id in layers {
        let w = store.get_mut(id).data_mut();
        let k = w.len() - kept_weights(w.len(), ratio);
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()).then(a.cmp(&b)));
        for &i in &order[..k] {
            w[i] = 0.0;
        }
    }
    Ok(())
}

/// Weight matrices of every attention and feed-forward linear map.
pub fn linear_layers(model: &Model) -> Vec<ParamId> {
    model
        .vit
        .blocks
        .iter()
        .flat_map(|b| b.linear_weights())
        .collect()
}

/// Pruned copy of `model`; biases, norms, embeddings and interpreters are untouched.
pub fn magnitude_prune(model: &Model, ratio: f64) -> Result<Model> {
    let mut m = model.clone();
    prune_layers(&mut m.store, &linear_layers(model), ratio)?;
    Ok(m)
}
