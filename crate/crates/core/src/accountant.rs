//! Analytical FLOPs model of the transformer, charged per live token.
//!
//! The closed forms count one multiply-accumulate as one FLOP, the usual
//! convention for transformer cost tables. The token count `N` of a block
//! includes the class token. Patch embedding, layer norms, softmax and
//! the classifier head are not charged.

use std::time::{Duration, Instant};

use crate::error::{contract_err, Error, Result};
use crate::model::ModelConfig;

/// `4·N·D² + 2·N²·D`.
pub fn msa_flops(n: u64, d: u64) -> u64 {
    4 * n * d * d + 2 * n * n * d
}

/// `8·N·D²`.
pub fn ffn_flops(n: u64, d: u64) -> u64 {
    8 * n * d * d
}

/// One interpreter over `n` live patches: the `D×D` query projection of
/// every patch, the key projection of the policy token and one dot product
/// per patch.
pub fn interpreter_flops(n: u64, d: u64) -> u64 {
    n * d * d + d * d + n * d
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    pub embed_dim: usize,
    pub depth: usize,
    pub num_patches: usize,
    /// Blocks per interpreter group; `None` for a plain backbone.
    pub blocks_per_group: Option<usize>,
}

impl CostConfig {
    pub fn from_model(cfg: &ModelConfig) -> Self {
        CostConfig {
            embed_dim: cfg.vit.embed_dim,
            depth: cfg.vit.depth,
            num_patches: cfg.vit.num_patches(),
            blocks_per_group: Some(cfg.groups.blocks_per_group),
        }
    }

    /// Backbone only, without interpreter cost.
    pub fn dense(cfg: &ModelConfig) -> Self {
        CostConfig {
            blocks_per_group: None,
            ..Self::from_model(cfg)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCost {
    /// Tokens processed, class token included (mean over samples).
    pub tokens: f64,
    pub msa: f64,
    pub ffn: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub samples: usize,
    pub blocks: Vec<BlockCost>,
    /// Interpreter FLOPs per sample.
    pub interpreter: f64,
    /// Mean FLOPs per sample.
    pub total: f64,
    /// FLOPs of the same model with every token live.
    pub baseline_total: f64,
    /// Live-patch fraction per block.
    pub keep_ratios: Vec<f64>,
}

impl CostReport {
    pub fn speedup(&self) -> f64 {
        self.baseline_total / self.total
    }

    /// Comma-separated table, one row per block followed by a totals row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,tokens,keep_ratio,msa_flops,ffn_flops\n");
        for (i, (b, k)) in self.blocks.iter().zip(&self.keep_ratios).enumerate() {
            out.push_str(&format!(
                "{},{},{:.6},{},{}\n",
                i + 1,
                b.tokens,
                k,
                b.msa,
                b.ffn
            ));
        }
        out.push_str(&format!(
            "total,,,{},{}\n# interpreter={} total={} baseline={} speedup={:.6}\n",
            self.blocks.iter().map(|b| b.msa).sum::<f64>(),
            self.blocks.iter().map(|b| b.ffn).sum::<f64>(),
            self.interpreter,
            self.total,
            self.baseline_total,
            self.speedup()
        ));
        out
    }
}

fn exact_flops(cfg: &CostConfig, trace: &[usize]) -> (Vec<(u64, u64)>, u64) {
    let d = cfg.embed_dim as u64;
    let blocks = trace
        .iter()
        .map(|&live| {
            let n = live as u64 + 1;
            (msa_flops(n, d), ffn_flops(n, d))
        })
        .collect();
    let interp = match cfg.blocks_per_group {
        Some(l) => (0..cfg.depth)
            .step_by(l)
            .map(|b| {
                let entry = if b == 0 {
                    cfg.num_patches
                } else {
                    trace[b - 1]
                };
                interpreter_flops(entry as u64, d)
            })
            .sum(),
        None => 0,
    };
    (blocks, interp)
}

fn check_trace(cfg: &CostConfig, trace: &[usize]) -> Result<()> {
    if trace.len() != cfg.depth {
        return Err(contract_err(format!(
            "keep trace has {} entries for {} blocks",
            trace.len(),
            cfg.depth
        )));
    }
    if let Some(l) = cfg.blocks_per_group {
        if l == 0 || cfg.depth % l != 0 {
            return Err(Error::Config(format!(
                "{l} blocks per group do not divide depth {}",
                cfg.depth
            )));
        }
    }
    let mut prev = cfg.num_patches;
    for (i, &t) in trace.iter().enumerate() {
        if t > prev {
            return Err(contract_err(format!(
                "keep trace increases at block {}: {} after {}",
                i + 1,
                t,
                prev
            )));
        }
        prev = t;
    }
    Ok(())
}

/// Exact FLOPs of one forward pass given the live patch count of each block.
pub fn sample_flops(cfg: &CostConfig, trace: &[usize]) -> Result<u64> {
    check_trace(cfg, trace)?;
    let (blocks, interp) = exact_flops(cfg, trace);
    Ok(blocks.iter().map(|(m, f)| m + f).sum::<u64>() + interp)
}

/// Cost of one sample.
pub fn model_flops(cfg: &CostConfig, trace: &[usize]) -> Result<CostReport> {
    dataset_flops(cfg, std::slice::from_ref(&trace.to_vec()))
}

/// Mean cost over many samples' keep traces.
pub fn dataset_flops(cfg: &CostConfig, traces: &[Vec<usize>]) -> Result<CostReport> {
    if traces.is_empty() {
        return Err(contract_err("no keep traces"));
    }
    let n = traces.len() as f64;
    let mut blocks = vec![
        BlockCost {
            tokens: 0.0,
            msa: 0.0,
            ffn: 0.0
        };
        cfg.depth
    ];
    let mut keep = vec![0.0; cfg.depth];
    let mut interpreter = 0.0;
    let mut total = 0.0;
    for t in traces {
        check_trace(cfg, t)?;
        let (b, i) = exact_flops(cfg, t);
        for (k, ((m, f), &live)) in b.iter().zip(t).enumerate() {
            blocks[k].tokens += (live + 1) as f64 / n;
            blocks[k].msa += *m as f64 / n;
            blocks[k].ffn += *f as f64 / n;
            keep[k] += live as f64 / cfg.num_patches as f64 / n;
            total += (m + f) as f64 / n;
        }
        interpreter += i as f64 / n;
        total += i as f64 / n;
    }
    let baseline_total = sample_flops(cfg, &vec![cfg.num_patches; cfg.depth])? as f64;
    Ok(CostReport {
        samples: traces.len(),
        blocks,
        interpreter,
        total,
        baseline_total,
        keep_ratios: keep,
    })
}

/// Median wall-clock time of `runs` calls after `warmup` discarded calls.
pub fn time_median<F: FnMut()>(runs: usize, warmup: usize, mut f: F) -> Result<Duration> {
    if runs < 5 {
        return Err(Error::Config(format!(
            "timing needs at least 5 runs, got {runs}"
        )));
    }
    for _ in 0..warmup {
        f();
    }
    let mut times: Vec<Duration> = (0..runs)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .collect();
    times.sort();
    Ok(times[runs / 2])
}
