//! Self-critical REINFORCE for one interpreter.

use crate::error::{Error, Result};
use crate::gradcore::{GradBuffer, NodeId, Rng, Session, Trainable};
use crate::harness::synthetic::Sample;
use crate::interpreter::{
    apply_decisions, decide, log_prob_node, DecisionMode, GroupDecisions, ScoreSet,
};
use crate::model::Model;
use crate::vit::{argmax, TokenSequence};

use super::optim::Adam;
use super::reward::{reward, RewardConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub group: usize,
    pub sampled: GroupDecisions,
    pub greedy: GroupDecisions,
    /// `R(u)` of the sampled configuration.
    pub reward: f64,
    /// `R(û)` of the greedy configuration.
    pub baseline: f64,
    /// `R(u) − R(û)`.
    pub advantage: f64,
    pub correct: bool,
    pub greedy_correct: bool,
    /// Patches live at group entry.
    pub n: usize,
    pub kept: usize,
    pub greedy_kept: usize,
}

/// Reward bookkeeping for one sampled draw against a greedy baseline.
///
/// `correct` reports whether the prediction is right under the given
/// decisions. The returned node is `−A · log π(u)`, or `None` when `A = 0`.
pub fn self_critical_episode<'s, F>(
    sess: &mut Session<'s>,
    scores: &ScoreSet,
    group: usize,
    threshold: f64,
    cfg: &RewardConfig,
    rng: &mut Rng,
    mut correct: F,
) -> Result<(EpisodeRecord, Option<NodeId>)>
where
    F: FnMut(&mut Session<'s>, &GroupDecisions) -> Result<bool>,
{
    let greedy = decide(group, &scores.scores, DecisionMode::Greedy, threshold, rng);
    let greedy_correct = correct(sess, &greedy)?;
    let sampled = decide(group, &scores.scores, DecisionMode::Sample, threshold, rng);
    let correct_now = correct(sess, &sampled)?;
    let n = scores.scores.len();
    let r = reward(sampled.kept(), n, correct_now, cfg);
    let b = reward(greedy.kept(), n, greedy_correct, cfg);
    let advantage = r - b;
    let node = if advantage != 0.0 {
        let lp = log_prob_node(sess, scores, &sampled)?;
        Some(sess.graph.scale(lp, -advantage))
    } else {
        None
    };
    Ok((
        EpisodeRecord {
            group,
            kept: sampled.kept(),
            greedy_kept: greedy.kept(),
            sampled,
            greedy,
            reward: r,
            baseline: b,
            advantage,
            correct: correct_now,
            greedy_correct,
            n,
        },
        node,
    ))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyStepStats {
    pub reward_sum: f64,
    pub correct: usize,
    pub episodes: usize,
    /// Sum over episodes of each group's keep ratio.
    pub keep_sum: Vec<f64>,
}

impl PolicyStepStats {
    pub fn merge(&mut self, other: &PolicyStepStats) {
        self.reward_sum += other.reward_sum;
        self.correct += other.correct;
        self.episodes += other.episodes;
        if self.keep_sum.len() < other.keep_sum.len() {
            self.keep_sum.resize(other.keep_sum.len(), 0.0);
        }
        for (a, b) in self.keep_sum.iter_mut().zip(&other.keep_sum) {
            *a += b;
        }
    }
}

/// Runs groups `..group` greedily and returns the sequence entering `group`
/// with the keep ratio of each earlier group.
pub(crate) fn greedy_prefix(
    model: &Model,
    sess: &mut Session<'_>,
    seq: TokenSequence,
    group: usize,
    rng: &mut Rng,
) -> Result<(TokenSequence, Vec<f64>)> {
    let n = seq.num_patches() as f64;
    let mut seq = seq;
    let mut ratios = Vec::with_capacity(group);
    for g in 0..group {
        let s = model.scores(sess, &seq, g)?;
        let d = decide(g, &s.scores, DecisionMode::Greedy, model.threshold(), rng);
        seq = apply_decisions(&seq, &d)?;
        ratios.push(seq.live_patch_count() as f64 / n);
        seq = model.run_group(sess, &seq, g)?;
    }
    Ok((seq, ratios))
}

/// Completes a forward from the entry of `group` with `decisions`, keeping
/// every token in later groups, and returns the predicted class.
fn predict_from(
    model: &Model,
    sess: &mut Session<'_>,
    entry: &TokenSequence,
    group: usize,
    decisions: &GroupDecisions,
) -> Result<usize> {
    let mut seq = apply_decisions(entry, decisions)?;
    for g in group..model.cfg.groups.groups {
        seq = model.run_group(sess, &seq, g)?;
    }
    let logits = model.head(sess, &seq)?;
    Ok(argmax(sess.graph.value(logits)))
}

/// One REINFORCE update of interpreter `group` over `batch`.
///
/// Earlier groups use greedy decisions, later groups keep every token.
/// `samples_per_image` draws are averaged per image against one greedy baseline.
pub fn reinforce_step(
    model: &mut Model,
    batch: &[&Sample],
    group: usize,
    cfg: &RewardConfig,
    samples_per_image: usize,
    adam: &mut Adam,
    rng: &mut Rng,
) -> Result<PolicyStepStats> {
    let trainable = Trainable::only(&model.store, &model.interpreter_ids(group));
    let mut buffer = GradBuffer::new(&model.store);
    let mut stats = PolicyStepStats {
        keep_sum: vec![0.0; model.cfg.groups.groups],
        ..Default::default()
    };
    let k = samples_per_image.max(1);
    let weight = 1.0 / (batch.len() * k) as f64;
    let np = model.num_patches() as f64;
    for sample in batch {
        let m: &Model = model;
        let mut sess = Session::training(&m.store, &trainable);
        let seq = m.embed(&mut sess, &sample.image)?;
        let (entry, prefix_ratios) = greedy_prefix(m, &mut sess, seq, group, rng)?;
        let scores = m.scores(&mut sess, &entry, group)?;
        let mut surrogate: Option<NodeId> = None;
        for _ in 0..k {
            let (rec, node) = self_critical_episode(
                &mut sess,
                &scores,
                group,
                m.threshold(),
                cfg,
                rng,
                |s, d| Ok(predict_from(m, s, &entry, group, d)? == sample.label),
            )?;
            stats.reward_sum += rec.reward;
            stats.correct += rec.correct as usize;
            stats.episodes += 1;
            for (g, r) in prefix_ratios.iter().enumerate() {
                stats.keep_sum[g] += r;
            }
            let live_after = rec.kept as f64 / np;
            for g in group..m.cfg.groups.groups {
                stats.keep_sum[g] += live_after;
            }
            if let Some(n) = node {
                surrogate = Some(match surrogate {
                    None => n,
                    Some(s) => sess.graph.add(s, n)?,
                });
            }
        }
        if let Some(root) = surrogate {
            sess.graph.backward(root)?;
            buffer.accumulate(&sess.grads(), weight);
        }
    }
    if !buffer.is_finite() {
        return Err(Error::NonFinite(format!(
            "policy gradient for interpreter {} is not finite",
            group + 1
        )));
    }
    adam.update(&mut model.store, &buffer)?;
    Ok(stats)
}
