//! Cross-entropy training of the transformer blocks.

use crate::error::Result;
use crate::gradcore::{GradBuffer, ParamId, Rng, Session, Trainable};
use crate::harness::synthetic::Sample;
use crate::model::{GroupPolicy, Model};

use super::optim::Adam;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupervisedStats {
    pub loss_sum: f64,
    pub correct: usize,
    pub samples: usize,
    pub keep_sum: Vec<f64>,
}

impl SupervisedStats {
    pub fn merge(&mut self, other: &SupervisedStats) {
        self.loss_sum += other.loss_sum;
        self.correct += other.correct;
        self.samples += other.samples;
        if self.keep_sum.len() < other.keep_sum.len() {
            self.keep_sum.resize(other.keep_sum.len(), 0.0);
        }
        for (a, b) in self.keep_sum.iter_mut().zip(&other.keep_sum) {
            *a += b;
        }
    }
}

/// Mean cross-entropy update of `params` over `batch` under fixed group policies.
pub fn supervised_step(
    model: &mut Model,
    batch: &[&Sample],
    params: &[ParamId],
    policies: &[GroupPolicy],
    adam: &mut Adam,
) -> Result<SupervisedStats> {
    let trainable = Trainable::only(&model.store, params);
    let mut buffer = GradBuffer::new(&model.store);
    let mut stats = SupervisedStats {
        keep_sum: vec![0.0; model.cfg.groups.groups],
        ..Default::default()
    };
    let weight = 1.0 / batch.len() as f64;
    // Greedy and keep-all policies never draw from the generator.
    let mut rng = Rng::seed_from_u64(0);
    for sample in batch {
        let mut sess = Session::training(&model.store, &trainable);
        let (logits, trace) = model.forward_in(&mut sess, &sample.image, policies, &mut rng)?;
        let loss = sess.graph.cross_entropy(logits, sample.label)?;
        stats.loss_sum += sess.graph.scalar(loss);
        stats.correct += (trace.prediction() == sample.label) as usize;
        stats.samples += 1;
        for (a, r) in stats.keep_sum.iter_mut().zip(trace.keep_ratios()) {
            *a += r;
        }
        sess.graph.backward(loss)?;
        buffer.accumulate(&sess.grads(), weight);
    }
    adam.update(&mut model.store, &buffer)?;
    Ok(stats)
}

/// Policies used while fine-tuning after interpreter `group` was trained:
/// greedy up to and including `group`, keep-all afterwards.
pub fn finetune_policies(model: &Model, group: usize) -> Vec<GroupPolicy> {
    (0..model.cfg.groups.groups)
        .map(|g| {
            if g <= group {
                GroupPolicy::Greedy
            } else {
                GroupPolicy::KeepAll
            }
        })
        .collect()
}

/// One update of the blocks in groups `group..` with greedy decisions.
pub fn finetune_step(
    model: &mut Model,
    batch: &[&Sample],
    group: usize,
    adam: &mut Adam,
) -> Result<SupervisedStats> {
    let params = model.block_ids_from(group);
    let policies = finetune_policies(model, group);
    supervised_step(model, batch, &params, &policies, adam)
}

/// One dense update of every backbone parameter.
pub fn backbone_step(
    model: &mut Model,
    batch: &[&Sample],
    adam: &mut Adam,
) -> Result<SupervisedStats> {
    let params = model.vit.all_ids();
    let policies = vec![GroupPolicy::KeepAll; model.cfg.groups.groups];
    supervised_step(model, batch, &params, &policies, adam)
}
