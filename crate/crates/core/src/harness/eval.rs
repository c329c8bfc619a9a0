use crate::error::Result;
use crate::gradcore::Rng;
use crate::harness::synthetic::Sample;
use crate::model::{ForwardTrace, GroupPolicy, Model};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    /// Mean live-patch fraction inside each group.
    pub keep_ratios: Vec<f64>,
    /// Mean live-patch fraction over all blocks.
    pub mean_keep_ratio: f64,
}

/// Evaluates `samples` with the same group policies for every image.
pub fn evaluate_with(
    model: &Model,
    samples: &[Sample],
    policies: &[GroupPolicy],
    rng: &mut Rng,
) -> Result<(EvalReport, Vec<ForwardTrace>)> {
    let mut traces = Vec::with_capacity(samples.len());
    let mut correct = 0;
    let groups = model.cfg.groups.groups;
    let mut keep = vec![0.0; groups];
    let mut mean = 0.0;
    for s in samples {
        let t = model.forward(&s.image, policies, rng)?;
        correct += (t.prediction() == s.label) as usize;
        for (k, r) in keep.iter_mut().zip(t.keep_ratios()) {
            *k += r;
        }
        mean += t.mean_keep_ratio(model.num_patches());
        traces.push(t);
    }
    let n = samples.len().max(1) as f64;
    Ok((
        EvalReport {
            samples: samples.len(),
            accuracy: correct as f64 / n,
            keep_ratios: keep.into_iter().map(|k| k / n).collect(),
            mean_keep_ratio: mean / n,
        },
        traces,
    ))
}

/// Greedy decisions in every group.
pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<(EvalReport, Vec<ForwardTrace>)> {
    let policies = vec![GroupPolicy::Greedy; model.cfg.groups.groups];
    evaluate_with(model, samples, &policies, &mut Rng::seed_from_u64(0))
}

/// Every token kept: the dense backbone.
pub fn evaluate_dense(
    model: &Model,
    samples: &[Sample],
) -> Result<(EvalReport, Vec<ForwardTrace>)> {
    let policies = vec![GroupPolicy::KeepAll; model.cfg.groups.groups];
    evaluate_with(model, samples, &policies, &mut Rng::seed_from_u64(0))
}
