//! Multi-head interpreter: scores each live patch token against a learned
//! policy token and turns the scores into keep/drop decisions.
//!
//! `I_i = (1/H) Σ_h sigmoid(F_q^h(x_i) · F_k^h(p))`, with `F_q^h`, `F_k^h`
//! the per-head column slices of two linear maps `D → D`.

use crate::error::{contract_err, Error, Result};
use crate::gradcore::{NodeId, ParamId, ParamStore, Rng, Session, Tensor};
use crate::vit::{TokenSequence, INIT_STD};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// How the blocks are split into interpreter-led groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupConfig {
    pub groups: usize,
    pub blocks_per_group: usize,
    pub threshold: f64,
}

impl GroupConfig {
    pub fn new(groups: usize, blocks_per_group: usize, threshold: f64) -> Result<Self> {
        let g = GroupConfig {
            groups,
            blocks_per_group,
            threshold,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.blocks_per_group == 0 {
            return Err(Error::Config(
                "groups and blocks per group must be positive".into(),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn total_blocks(&self) -> usize {
        self.groups * self.blocks_per_group
    }

    pub fn group_of_block(&self, block: usize) -> usize {
        block / self.blocks_per_group
    }

    pub fn blocks_of(&self, group: usize) -> std::ops::Range<usize> {
        group * self.blocks_per_group..(group + 1) * self.blocks_per_group
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpreterParams {
    pub policy_token: ParamId,
    pub q_w: ParamId,
    pub q_b: Option<ParamId>,
    pub k_w: ParamId,
    pub k_b: Option<ParamId>,
    pub heads: usize,
}

impl InterpreterParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        heads: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!(
                "{heads} interpreter heads do not divide width {dim}"
            )));
        }
        let mut tn = |shape: Vec<usize>| {
            let n = shape.iter().product();
            Tensor::new(
                shape,
                (0..n).map(|_| rng.truncated_normal(INIT_STD)).collect(),
            )
            .expect("consistent shape")
        };
        let policy_token = store.add(format!("{prefix}.policy"), tn(vec![1, dim]));
        let q_w = store.add(format!("{prefix}.q.w"), tn(vec![dim, dim]));
        let k_w = store.add(format!("{prefix}.k.w"), tn(vec![dim, dim]));
        let (q_b, k_b) = if bias {
            (
                Some(store.add(format!("{prefix}.q.b"), Tensor::zeros(vec![dim]))),
                Some(store.add(format!("{prefix}.k.b"), Tensor::zeros(vec![dim]))),
            )
        } else {
            (None, None)
        };
        Ok(InterpreterParams {
            policy_token,
            q_w,
            q_b,
            k_w,
            k_b,
            heads,
        })
    }

    pub fn locate(store: &ParamStore, prefix: &str, heads: usize) -> Result<Self> {
        let id = |n: &str| {
            store
                .find(&format!("{prefix}.{n}"))
                .ok_or_else(|| Error::Config(format!("missing parameter {prefix}.{n}")))
        };
        Ok(InterpreterParams {
            policy_token: id("policy")?,
            q_w: id("q.w")?,
            q_b: id("q.b").ok(),
            k_w: id("k.w")?,
            k_b: id("k.b").ok(),
            heads,
        })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.policy_token, self.q_w, self.k_w];
        v.extend(self.q_b);
        v.extend(self.k_b);
        v.sort();
        v
    }
}

/// Scores of one interpreter pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    /// `[n+1 × 1]` node holding a score for every row (class and dead rows included).
    pub node: NodeId,
    /// `(patch index, I_i)` for the patch tokens live at group entry.
    pub scores: Vec<(usize, f64)>,
}

impl ScoreSet {
    /// Full-length sequence over all patches with 0 for tokens not scored.
    pub fn full(&self, num_patches: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_patches];
        for &(i, s) in &self.scores {
            out[i] = s;
        }
        out
    }
}

pub fn informative_scores(
    sess: &mut Session<'_>,
    seq: &TokenSequence,
    ip: &InterpreterParams,
) -> Result<ScoreSet> {
    let x = seq.tokens;
    let d = sess.graph.dims(x).1;
    let hd = d / ip.heads;
    let wq = sess.param(ip.q_w);
    let mut q = sess.graph.matmul(x, wq)?;
    if let Some(b) = ip.q_b {
        let bn = sess.param(b);
        q = sess.graph.add_row(q, bn)?;
    }
    let p = sess.param(ip.policy_token);
    let wk = sess.param(ip.k_w);
    let mut k = sess.graph.matmul(p, wk)?;
    if let Some(b) = ip.k_b {
        let bn = sess.param(b);
        k = sess.graph.add_row(k, bn)?;
    }
    let mut total: Option<NodeId> = None;
    for h in 0..ip.heads {
        let qh = sess.graph.slice_cols(q, h * hd, hd)?;
        let kh = sess.graph.slice_cols(k, h * hd, hd)?;
        let kt = sess.graph.transpose(kh);
        let dots = sess.graph.matmul(qh, kt)?;
        let s = sess.graph.sigmoid(dots);
        total = Some(match total {
            None => s,
            Some(t) => sess.graph.add(t, s)?,
        });
    }
    let node = sess
        .graph
        .scale(total.expect("at least one head"), 1.0 / ip.heads as f64);
    let values = sess.graph.value(node);
    let scores = seq
        .live_patches()
        .into_iter()
        .map(|i| (i, values[i + 1]))
        .collect();
    Ok(ScoreSet { node, scores })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionMode {
    /// `u_i = [I_i > threshold]`, the most probable configuration.
    Greedy,
    /// `u_i ~ Bernoulli(I_i)`.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeepDecision {
    pub group: usize,
    /// Patch index in grid order.
    pub token: usize,
    pub score: f64,
    /// Policy outcome `u_i` as drawn (or thresholded).
    pub sampled: bool,
    /// Effective outcome after the force-keep rule.
    pub keep: bool,
    /// `u_i·ln I + (1 − u_i)·ln(1 − I)` of the drawn outcome.
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupDecisions {
    pub group: usize,
    pub decisions: Vec<KeepDecision>,
    /// Patch kept by the degenerate-case rule because every draw was a drop.
    pub forced: Option<usize>,
}

impl GroupDecisions {
    /// Keep flags over all `num_patches`; patches without a decision were already dead.
    pub fn keep_mask(&self, num_patches: usize) -> Vec<bool> {
        let mut m = vec![false; num_patches];
        for d in &self.decisions {
            m[d.token] = d.keep;
        }
        m
    }

    pub fn kept(&self) -> usize {
        self.decisions.iter().filter(|d| d.keep).count()
    }

    pub fn sampled_outcomes(&self) -> Vec<bool> {
        self.decisions.iter().map(|d| d.sampled).collect()
    }

    pub fn log_prob(&self) -> f64 {
        self.decisions.iter().map(|d| d.log_prob).sum()
    }
}

pub fn bernoulli_log_prob(score: f64, keep: bool) -> f64 {
    if keep {
        score.ln()
    } else {
        (1.0 - score).ln()
    }
}

/// Turns scores into keep decisions. If every patch would be dropped, the
/// highest-scoring one (lowest index on ties) is kept and reported in `forced`.
pub fn decide(
    group: usize,
    scores: &[(usize, f64)],
    mode: DecisionMode,
    threshold: f64,
    rng: &mut Rng,
) -> GroupDecisions {
    let mut decisions: Vec<KeepDecision> = scores
        .iter()
        .map(|&(token, score)| {
            let u = match mode {
                DecisionMode::Greedy => score > threshold,
                DecisionMode::Sample => rng.bernoulli(score),
            };
            KeepDecision {
                group,
                token,
                score,
                sampled: u,
                keep: u,
                log_prob: bernoulli_log_prob(score, u),
            }
        })
        .collect();
    let mut forced = None;
    if !decisions.is_empty() && decisions.iter().all(|d| !d.keep) {
        let mut best = 0;
        for (i, d) in decisions.iter().enumerate() {
            if d.score > decisions[best].score {
                best = i;
            }
        }
        decisions[best].keep = true;
        forced = Some(decisions[best].token);
    }
    GroupDecisions {
        group,
        decisions,
        forced,
    }
}

pub fn apply_decisions(seq: &TokenSequence, decisions: &GroupDecisions) -> Result<TokenSequence> {
    let live = seq.live_patches();
    if live.len() != decisions.decisions.len()
        || live
            .iter()
            .zip(&decisions.decisions)
            .any(|(&t, d)| t != d.token)
    {
        return Err(contract_err(format!(
            "{} decisions for {} live patches",
            decisions.decisions.len(),
            live.len()
        )));
    }
    let mut out = seq.clone();
    out.restrict(&decisions.keep_mask(seq.num_patches()))?;
    Ok(out)
}

/// Graph node for `Σ_i ln[I_i u_i + (1 − I_i)(1 − u_i)]` over the decided
/// tokens, using each token's drawn outcome `u_i`.
pub fn log_prob_node(
    sess: &mut Session<'_>,
    scores: &ScoreSet,
    decisions: &GroupDecisions,
) -> Result<NodeId> {
    let rows: Vec<usize> = decisions.decisions.iter().map(|d| d.token + 1).collect();
    let picked = sess.graph.gather_rows(scores.node, &rows)?;
    let n = rows.len();
    // I·u + (1 − I)(1 − u) = (2u − 1)·I + (1 − u)
    let slope: Vec<f64> = decisions
        .decisions
        .iter()
        .map(|d| if d.sampled { 1.0 } else { -1.0 })
        .collect();
    let offset: Vec<f64> = decisions
        .decisions
        .iter()
        .map(|d| if d.sampled { 0.0 } else { 1.0 })
        .collect();
    let slope = sess.graph.constant(Tensor::matrix(n, 1, slope)?);
    let offset = sess.graph.constant(Tensor::matrix(n, 1, offset)?);
    let prob = sess.graph.mul(picked, slope)?;
    let prob = sess.graph.add(prob, offset)?;
    let logp = sess.graph.log(prob);
    Ok(sess.graph.sum(logp))
}
