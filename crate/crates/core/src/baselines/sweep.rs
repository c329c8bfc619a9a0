//! Accuracy/cost trade-off sweeps without any retraining.

use std::collections::HashMap;

use crate::accountant::{dataset_flops, CostConfig};
use crate::error::Result;
use crate::harness::eval::{evaluate_dense, evaluate_with};
use crate::harness::synthetic::Sample;
use crate::model::{ForwardTrace, GroupPolicy, Model};

use super::prune::magnitude_prune;

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub accuracy: f64,
    pub mean_keep_ratio: f64,
    /// Mean FLOPs per sample, interpreters included.
    pub flops: f64,
}

/// Greedy evaluation at each threshold.
pub fn threshold_sweep(
    model: &Model,
    samples: &[Sample],
    thresholds: &[f64],
) -> Result<Vec<ThresholdRow>> {
    let mut m = model.clone();
    let cost = CostConfig::from_model(&m.cfg);
    thresholds
        .iter()
        .map(|&t| {
            m.set_threshold(t)?;
            let (report, traces) = crate::harness::eval::evaluate(&m, samples)?;
            let live: Vec<Vec<usize>> = traces.into_iter().map(|t| t.block_live).collect();
            Ok(ThresholdRow {
                threshold: t,
                accuracy: report.accuracy,
                mean_keep_ratio: report.mean_keep_ratio,
                flops: dataset_flops(&cost, &live)?.total,
            })
        })
        .collect()
}

pub fn threshold_csv(rows: &[ThresholdRow]) -> String {
    let mut out = String::from("threshold,accuracy,mean_keep_ratio,flops\n");
    for r in rows {
        out.push_str(&format!(
            "{:.4},{:.6},{:.6},{:.0}\n",
            r.threshold, r.accuracy, r.mean_keep_ratio, r.flops
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    /// Linear-layer FLOPs relative to the dense, unpruned backbone.
    pub flops_fraction: f64,
    pub accuracy: f64,
    /// Token threshold in force, `None` when every token is kept.
    pub threshold: Option<f64>,
    pub prune_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffCurves {
    pub pruning: Vec<CurvePoint>,
    pub tokens: Vec<CurvePoint>,
    pub combined: Vec<CurvePoint>,
}

impl TradeoffCurves {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,flops_fraction,accuracy,threshold,prune_ratio\n");
        for (name, curve) in [
            ("pruning", &self.pruning),
            ("tokens", &self.tokens),
            ("combined", &self.combined),
        ] {
            for p in curve {
                let t = p
                    .threshold
                    .map_or_else(|| "none".to_string(), |t| format!("{t:.4}"));
                out.push_str(&format!(
                    "{name},{:.6},{:.6},{t},{:.4}\n",
                    p.flops_fraction, p.accuracy, p.prune_ratio
                ));
            }
        }
        out
    }
}

/// Linear-layer cost of a batch of forwards relative to all tokens live, scaled by the pruning keep fraction.
pub fn linear_flops_fraction(traces: &[ForwardTrace], num_patches: usize, prune_ratio: f64) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for t in traces {
        for &live in &t.block_live {
            acc += (live + 1) as f64 / (num_patches + 1) as f64;
            count += 1;
        }
    }
    (1.0 - prune_ratio) * acc / count.max(1) as f64
}

struct Evaluator<'a> {
    model: &'a Model,
    samples: &'a [Sample],
    thresholds: Vec<Option<f64>>,
    ratios: Vec<f64>,
    cache: HashMap<(usize, usize), CurvePoint>,
}

impl Evaluator<'_> {
    fn point(&mut self, ti: usize, pi: usize) -> Result<CurvePoint> {
        if let Some(p) = self.cache.get(&(ti, pi)) {
            return Ok(p.clone());
        }
        let ratio = self.ratios[pi];
        let mut m = magnitude_prune(self.model, ratio)?;
        let threshold = self.thresholds[ti];
        let (report, traces) = match threshold {
            None => evaluate_dense(&m, self.samples)?,
            Some(t) => {
                m.set_threshold(t)?;
                let policies = vec![GroupPolicy::Greedy; m.cfg.groups.groups];
                evaluate_with(
                    &m,
                    self.samples,
                    &policies,
                    &mut crate::gradcore::Rng::seed_from_u64(0),
                )?
            }
        };
        let p = CurvePoint {
            flops_fraction: linear_flops_fraction(&traces, m.num_patches(), ratio),
            accuracy: report.accuracy,
            threshold,
            prune_ratio: ratio,
        };
        self.cache.insert((ti, pi), p.clone());
        Ok(p)
    }
}

fn sort_by_cost(mut curve: Vec<CurvePoint>) -> Vec<CurvePoint> {
    // stable: the unreduced anchor stays first
    curve.sort_by(|a, b| b.flops_fraction.total_cmp(&a.flops_fraction));
    curve
}

/// Token-only, pruning-only and combined curves. The combined curve starts
/// dense and at each step takes whichever single move (next threshold or
/// next prune ratio) loses the least accuracy per unit of FLOPs saved.
pub fn combined_sweep(
    model: &Model,
    samples: &[Sample],
    thresholds: &[f64],
    prune_ratios: &[f64],
) -> Result<TradeoffCurves> {
    let mut ts: Vec<f64> = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    let mut rs: Vec<f64> = prune_ratios.iter().cloned().filter(|&r| r > 0.0).collect();
    rs.sort_by(f64::total_cmp);
    let mut ev = Evaluator {
        model,
        samples,
        thresholds: std::iter::once(None)
            .chain(ts.into_iter().map(Some))
            .collect(),
        ratios: std::iter::once(0.0).chain(rs).collect(),
        cache: HashMap::new(),
    };
    let (nt, np) = (ev.thresholds.len(), ev.ratios.len());
    let tokens = (0..nt)
        .map(|t| ev.point(t, 0))
        .collect::<Result<Vec<_>>>()?;
    let pruning = (0..np)
        .map(|p| ev.point(0, p))
        .collect::<Result<Vec<_>>>()?;

    let mut combined = vec![ev.point(0, 0)?];
    let (mut ti, mut pi) = (0, 0);
    while ti + 1 < nt || pi + 1 < np {
        let cur = ev.point(ti, pi)?;
        let mut best: Option<((usize, usize), f64, CurvePoint)> = None;
        for (cand_t, cand_p) in [(ti + 1, pi), (ti, pi + 1)] {
            if cand_t >= nt || cand_p >= np {
                continue;
            }
            let c = ev.point(cand_t, cand_p)?;
            let saved = cur.flops_fraction - c.flops_fraction;
            let cost = if saved > 0.0 {
                (cur.accuracy - c.accuracy) / saved
            } else {
                f64::INFINITY
            };
            let better = match &best {
                None => true,
                Some((_, bc, bp)) => cost < *bc || (cost == *bc && c.accuracy > bp.accuracy),
            };
            if better {
                best = Some(((cand_t, cand_p), cost, c));
            }
        }
        let ((t, p), _, point) = best.expect("at least one move remains");
        ti = t;
        pi = p;
        combined.push(point);
    }
    Ok(TradeoffCurves {
        pruning: sort_by_cost(pruning),
        tokens: sort_by_cost(tokens),
        combined: sort_by_cost(combined),
    })
}

/// Linear interpolation of `curve` (sorted by decreasing cost) at `x`, if inside its range.
pub fn accuracy_at(curve: &[CurvePoint], x: f64) -> Option<f64> {
    for w in curve.windows(2) {
        let (hi, lo) = (&w[0], &w[1]);
        if x <= hi.flops_fraction && x >= lo.flops_fraction {
            let span = hi.flops_fraction - lo.flops_fraction;
            if span == 0.0 {
                return Some(hi.accuracy.max(lo.accuracy));
            }
            let f = (x - lo.flops_fraction) / span;
            return Some(lo.accuracy + f * (hi.accuracy - lo.accuracy));
        }
    }
    match curve {
        [only] if only.flops_fraction == x => Some(only.accuracy),
        _ => None,
    }
}
