//! Backbone plus per-group interpreters.

use crate::error::{contract_err, Error, Result};
use crate::gradcore::{NodeId, ParamId, ParamStore, Rng, Session};
use crate::image::Image;
use crate::interpreter::{
    apply_decisions, bernoulli_log_prob, decide, informative_scores, DecisionMode, GroupConfig,
    GroupDecisions, InterpreterParams, KeepDecision, ScoreSet,
};
use crate::vit::{block_forward, classify, embed, patchify, TokenSequence, VitConfig, VitParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vit: VitConfig,
    pub groups: GroupConfig,
    pub interpreter_heads: usize,
    /// Whether the interpreter projections carry biases.
    pub interpreter_bias: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.vit.validate()?;
        self.groups.validate()?;
        if self.groups.total_blocks() != self.vit.depth {
            return Err(Error::Config(format!(
                "{} groups x {} blocks does not match depth {}",
                self.groups.groups, self.groups.blocks_per_group, self.vit.depth
            )));
        }
        if self.interpreter_heads == 0 || self.vit.embed_dim % self.interpreter_heads != 0 {
            return Err(Error::Config(format!(
                "{} interpreter heads do not divide width {}",
                self.interpreter_heads, self.vit.embed_dim
            )));
        }
        Ok(())
    }

    /// The default desk-scale model: 32x32 RGB inputs, 8x8 patches, six
    /// blocks of width 64 in three groups of two.
    pub fn toy() -> Self {
        ModelConfig {
            vit: VitConfig {
                image_height: 32,
                image_width: 32,
                channels: 3,
                patch_size: 8,
                embed_dim: 64,
                depth: 6,
                heads: 4,
                classes: 4,
            },
            groups: GroupConfig {
                groups: 3,
                blocks_per_group: 2,
                threshold: crate::interpreter::DEFAULT_THRESHOLD,
            },
            interpreter_heads: 4,
            interpreter_bias: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub vit: VitParams,
    pub interpreters: Vec<InterpreterParams>,
}

/// What a group does with its interpreter's scores.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupPolicy {
    KeepAll,
    Greedy,
    Sample,
    /// Externally supplied keep mask over all patches.
    Fixed(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupTrace {
    pub group: usize,
    /// Patch live flags at group entry.
    pub entry_live: Vec<bool>,
    /// Interpreter score per patch, 0 for patches already dropped.
    pub scores: Vec<f64>,
    pub decisions: GroupDecisions,
    /// Patch live flags inside the group's blocks.
    pub exit_live: Vec<bool>,
}

impl GroupTrace {
    pub fn keep_ratio(&self) -> f64 {
        let n = self.exit_live.len();
        self.exit_live.iter().filter(|&&l| l).count() as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub logits: Vec<f64>,
    pub groups: Vec<GroupTrace>,
    /// Live patch count in force at each block.
    pub block_live: Vec<usize>,
}

impl ForwardTrace {
    pub fn prediction(&self) -> usize {
        crate::vit::argmax(&self.logits)
    }

    pub fn keep_ratios(&self) -> Vec<f64> {
        self.groups.iter().map(GroupTrace::keep_ratio).collect()
    }

    /// Live fraction averaged over blocks.
    pub fn mean_keep_ratio(&self, num_patches: usize) -> f64 {
        let total: usize = self.block_live.iter().sum();
        total as f64 / (num_patches * self.block_live.len()) as f64
    }
}

impl Model {
    pub fn init(cfg: ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let vit = VitParams::init(cfg.vit.clone(), &mut store, rng)?;
        let interpreters = (0..cfg.groups.groups)
            .map(|g| {
                InterpreterParams::init(
                    &mut store,
                    &format!("interp{g}"),
                    cfg.vit.embed_dim,
                    cfg.interpreter_heads,
                    cfg.interpreter_bias,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            cfg,
            store,
            vit,
            interpreters,
        })
    }

    /// Rebinds handles after the store was filled from elsewhere.
    pub fn from_store(cfg: ModelConfig, store: ParamStore) -> Result<Self> {
        cfg.validate()?;
        let vit = VitParams::locate(cfg.vit.clone(), &store)?;
        let interpreters = (0..cfg.groups.groups)
            .map(|g| {
                InterpreterParams::locate(&store, &format!("interp{g}"), cfg.interpreter_heads)
            })
            .collect::<Result<Vec<_>>>()?;
        if cfg.interpreter_bias != interpreters.iter().all(|i| i.q_b.is_some()) {
            return Err(Error::Config(
                "interpreter bias flag does not match stored parameters".into(),
            ));
        }
        Ok(Model {
            cfg,
            store,
            vit,
            interpreters,
        })
    }

    pub fn num_patches(&self) -> usize {
        self.cfg.vit.num_patches()
    }

    pub fn threshold(&self) -> f64 {
        self.cfg.groups.threshold
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        let mut g = self.cfg.groups.clone();
        g.threshold = threshold;
        g.validate()?;
        self.cfg.groups = g;
        Ok(())
    }

    /// Parameters of the blocks in groups `from..`.
    pub fn block_ids_from(&self, from: usize) -> Vec<ParamId> {
        let start = from * self.cfg.groups.blocks_per_group;
        let mut v: Vec<ParamId> = self.vit.blocks[start..]
            .iter()
            .flat_map(|b| b.ids())
            .collect();
        v.sort();
        v
    }

    pub fn interpreter_ids(&self, group: usize) -> Vec<ParamId> {
        self.interpreters[group].ids()
    }

    pub fn embed(&self, sess: &mut Session<'_>, image: &Image) -> Result<TokenSequence> {
        let patches = patchify(image, self.cfg.vit.patch_size)?;
        embed(sess, &patches, &self.vit)
    }

    pub fn scores(
        &self,
        sess: &mut Session<'_>,
        seq: &TokenSequence,
        group: usize,
    ) -> Result<ScoreSet> {
        informative_scores(sess, seq, &self.interpreters[group])
    }

    /// Runs the blocks of one group on an already-decided sequence.
    pub fn run_group(
        &self,
        sess: &mut Session<'_>,
        seq: &TokenSequence,
        group: usize,
    ) -> Result<TokenSequence> {
        let mut s = seq.clone();
        for b in self.cfg.groups.blocks_of(group) {
            s = block_forward(sess, &s, &self.vit.blocks[b], self.cfg.vit.heads)?;
        }
        Ok(s)
    }

    pub fn head(&self, sess: &mut Session<'_>, seq: &TokenSequence) -> Result<NodeId> {
        classify(sess, seq, &self.vit)
    }

    /// Applies `policy` to a group given its scores.
    pub fn decide_group(
        &self,
        group: usize,
        seq: &TokenSequence,
        scores: &ScoreSet,
        policy: &GroupPolicy,
        rng: &mut Rng,
    ) -> Result<GroupDecisions> {
        let threshold = self.threshold();
        Ok(match policy {
            GroupPolicy::Greedy => {
                decide(group, &scores.scores, DecisionMode::Greedy, threshold, rng)
            }
            GroupPolicy::Sample => {
                decide(group, &scores.scores, DecisionMode::Sample, threshold, rng)
            }
            GroupPolicy::KeepAll => fixed_decisions(group, scores, &vec![true; seq.num_patches()]),
            GroupPolicy::Fixed(mask) => {
                if mask.len() != seq.num_patches() {
                    return Err(contract_err(format!(
                        "fixed mask of {} for {} patches",
                        mask.len(),
                        seq.num_patches()
                    )));
                }
                fixed_decisions(group, scores, mask)
            }
        })
    }

    /// Full forward with one policy per group.
    pub fn forward_in(
        &self,
        sess: &mut Session<'_>,
        image: &Image,
        policies: &[GroupPolicy],
        rng: &mut Rng,
    ) -> Result<(NodeId, ForwardTrace)> {
        if policies.len() != self.cfg.groups.groups {
            return Err(contract_err(format!(
                "{} group policies for {} groups",
                policies.len(),
                self.cfg.groups.groups
            )));
        }
        let mut seq = self.embed(sess, image)?;
        let mut groups = Vec::with_capacity(policies.len());
        let mut block_live = Vec::with_capacity(self.cfg.vit.depth);
        for (g, policy) in policies.iter().enumerate() {
            let scores = self.scores(sess, &seq, g)?;
            let decisions = self.decide_group(g, &seq, &scores, policy, rng)?;
            let entry_live = seq.patch_live();
            seq = apply_decisions(&seq, &decisions)?;
            let live = seq.live_patch_count();
            block_live.extend(std::iter::repeat(live).take(self.cfg.groups.blocks_per_group));
            groups.push(GroupTrace {
                group: g,
                entry_live,
                scores: scores.full(seq.num_patches()),
                decisions,
                exit_live: seq.patch_live(),
            });
            seq = self.run_group(sess, &seq, g)?;
        }
        let logits = self.head(sess, &seq)?;
        let trace = ForwardTrace {
            logits: sess.graph.value(logits).to_vec(),
            groups,
            block_live,
        };
        Ok((logits, trace))
    }

    /// Inference-only forward in a fresh frozen session.
    pub fn forward(
        &self,
        image: &Image,
        policies: &[GroupPolicy],
        rng: &mut Rng,
    ) -> Result<ForwardTrace> {
        let mut sess = Session::frozen(&self.store);
        self.forward_in(&mut sess, image, policies, rng)
            .map(|(_, t)| t)
    }

    /// Greedy decisions in every group; the deployed inference mode.
    pub fn infer(&self, image: &Image) -> Result<ForwardTrace> {
        let policies = vec![GroupPolicy::Greedy; self.cfg.groups.groups];
        self.forward(image, &policies, &mut Rng::seed_from_u64(0))
    }

    pub fn infer_dense(&self, image: &Image) -> Result<ForwardTrace> {
        let policies = vec![GroupPolicy::KeepAll; self.cfg.groups.groups];
        self.forward(image, &policies, &mut Rng::seed_from_u64(0))
    }
}

/// Decisions that follow a given mask; patches dead at entry get none.
fn fixed_decisions(group: usize, scores: &ScoreSet, mask: &[bool]) -> GroupDecisions {
    GroupDecisions {
        group,
        decisions: scores
            .scores
            .iter()
            .map(|&(token, score)| KeepDecision {
                group,
                token,
                score,
                sampled: mask[token],
                keep: mask[token],
                log_prob: bernoulli_log_prob(score, mask[token]),
            })
            .collect(),
        forced: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        let mut c = ModelConfig::toy();
        c.vit.image_height = 16;
        c.vit.image_width = 16;
        c.vit.patch_size = 4;
        c.vit.embed_dim = 16;
        c.interpreter_heads = 2;
        c
    }

    fn image(seed: u64) -> Image {
        let mut rng = Rng::seed_from_u64(seed);
        Image::new(16, 16, 3, (0..768).map(|_| rng.uniform()).collect()).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = small();
        c.groups.blocks_per_group = 3;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = small();
        c.interpreter_heads = 3;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        ModelConfig::toy().validate().unwrap();
    }

    #[test]
    fn keep_all_matches_plain_backbone() {
        let m = Model::init(small(), &mut Rng::seed_from_u64(1)).unwrap();
        let img = image(2);
        let t = m.infer_dense(&img).unwrap();
        let mut sess = Session::frozen(&m.store);
        let l = crate::vit::vit_forward(&mut sess, &img, &m.vit, None).unwrap();
        assert_eq!(t.logits, sess.graph.value(l));
        assert_eq!(t.block_live, vec![16; 6]);
        assert_eq!(t.mean_keep_ratio(16), 1.0);
    }

    #[test]
    fn greedy_trace_is_monotone_and_consistent() {
        let mut m = Model::init(small(), &mut Rng::seed_from_u64(3)).unwrap();
        // push scores around 0.5 so greedy drops some tokens
        let mut rng = Rng::seed_from_u64(4);
        for ip in m.interpreters.clone() {
            for id in ip.ids() {
                for v in m.store.get_mut(id).data_mut() {
                    *v = rng.normal();
                }
            }
        }
        let t = m.infer(&image(5)).unwrap();
        for w in t.groups.windows(2) {
            for i in 0..16 {
                assert!(!w[1].exit_live[i] || w[0].exit_live[i]);
            }
            assert_eq!(w[0].exit_live, w[1].entry_live);
        }
        for g in &t.groups {
            for i in 0..16 {
                assert_eq!(g.scores[i] != 0.0, g.entry_live[i]);
            }
        }
        let counts: Vec<usize> = t
            .groups
            .iter()
            .map(|g| g.exit_live.iter().filter(|&&l| l).count())
            .collect();
        assert_eq!(
            t.block_live,
            vec![counts[0], counts[0], counts[1], counts[1], counts[2], counts[2]]
        );
        assert!(t.block_live[5] >= 1);
    }

    #[test]
    fn fixed_mask_matches_vit_forward_masks() {
        let m = Model::init(small(), &mut Rng::seed_from_u64(6)).unwrap();
        let img = image(7);
        let mut rng = Rng::seed_from_u64(8);
        let masks: Vec<Vec<bool>> = (0..3)
            .map(|_| (0..16).map(|_| rng.bernoulli(0.7)).collect())
            .collect();
        let policies: Vec<GroupPolicy> = masks.iter().cloned().map(GroupPolicy::Fixed).collect();
        let t = m.forward(&img, &policies, &mut rng).unwrap();
        let mut sess = Session::frozen(&m.store);
        let l = crate::vit::vit_forward(&mut sess, &img, &m.vit, Some(&masks)).unwrap();
        assert_eq!(t.logits, sess.graph.value(l));
    }

    #[test]
    fn from_store_rebinds_identically() {
        let m = Model::init(small(), &mut Rng::seed_from_u64(9)).unwrap();
        let m2 = Model::from_store(m.cfg.clone(), m.store.clone()).unwrap();
        assert_eq!(m.vit, m2.vit);
        assert_eq!(m.interpreters, m2.interpreters);
        let mut c = m.cfg.clone();
        c.interpreter_bias = false;
        assert!(Model::from_store(c, m.store.clone()).is_err());
    }

    #[test]
    fn policy_count_checked() {
        let m = Model::init(small(), &mut Rng::seed_from_u64(10)).unwrap();
        let r = m.forward(
            &image(1),
            &[GroupPolicy::Greedy],
            &mut Rng::seed_from_u64(0),
        );
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
