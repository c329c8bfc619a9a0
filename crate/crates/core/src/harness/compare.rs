//! Head-to-head comparisons on a trained model: fixed-rate dropping
//! strategies at matched cost, and heatmap localization quality.

use crate::accountant::{dataset_flops, CostConfig};
use crate::baselines::{cls_attention, random_drop, DropKind, DropStrategy};
use crate::error::Result;
use crate::explain::{
    assemble_scores, normalize_max, segmentation_metrics, upsample, Binarize, Heatmap,
    Interpolation, SegmentationResult,
};
use crate::gradcore::Rng;
use crate::harness::synthetic::Sample;
use crate::model::{GroupPolicy, Model};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub method: &'static str,
    pub accuracy: f64,
    pub mean_keep_ratio: f64,
    /// Mean backbone FLOPs per sample; the cost of computing the mask is not charged.
    pub flops: f64,
}

/// Drops the same number of patches before the first block with every
/// strategy, then runs the remaining blocks without further dropping.
pub fn baseline_compare(
    model: &Model,
    samples: &[Sample],
    ratio: f64,
    seed: u64,
) -> Result<Vec<BaselineRow>> {
    let cost = CostConfig::dense(&model.cfg);
    let groups = model.cfg.groups.groups;
    [DropKind::Random, DropKind::Attention, DropKind::Learned]
        .into_iter()
        .map(|kind| {
            let strategy = DropStrategy { kind, ratio, seed };
            let mut correct = 0;
            let mut keep = 0.0;
            let mut live = Vec::with_capacity(samples.len());
            for (i, s) in samples.iter().enumerate() {
                let mut policies = vec![GroupPolicy::KeepAll; groups];
                policies[0] = GroupPolicy::Fixed(strategy.mask(model, &s.image, i as u64)?);
                let t = model.forward(&s.image, &policies, &mut Rng::seed_from_u64(0))?;
                correct += (t.prediction() == s.label) as usize;
                keep += t.mean_keep_ratio(model.num_patches());
                live.push(t.block_live);
            }
            let n = samples.len() as f64;
            Ok(BaselineRow {
                method: kind.name(),
                accuracy: correct as f64 / n,
                mean_keep_ratio: keep / n,
                flops: dataset_flops(&cost, &live)?.total,
            })
        })
        .collect()
}

pub fn baseline_csv(rows: &[BaselineRow]) -> String {
    let mut out = String::from("method,accuracy,mean_keep_ratio,flops\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.0}\n",
            r.method, r.accuracy, r.mean_keep_ratio, r.flops
        ));
    }
    out
}

/// Where a patch-level relevance map comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeatSource {
    /// Greedy interpreter scores of one group, zero for dropped patches.
    Learned { group: usize },
    /// The 0/1 keep map of a random drop at `ratio`.
    Random { ratio: f64, seed: u64 },
    /// Second-block class-token attention, scaled so its maximum is 1.
    Attention,
}

impl HeatSource {
    pub fn name(&self) -> String {
        match self {
            HeatSource::Learned { group } => format!("learned-group{}", group + 1),
            HeatSource::Random { .. } => "random".into(),
            HeatSource::Attention => "attention".into(),
        }
    }

    /// Patch-grid scores for one image; `index` separates random draws.
    pub fn scores(&self, model: &Model, sample: &Sample, index: u64) -> Result<Vec<f64>> {
        match *self {
            HeatSource::Learned { group } => {
                assemble_scores(&model.infer(&sample.image)?.groups, group)
            }
            HeatSource::Random { ratio, seed } => {
                let keep = random_drop(
                    model.num_patches(),
                    ratio,
                    Rng::derive(seed, &[index]).next_u64(),
                )?;
                Ok(keep.into_iter().map(|k| k as u8 as f64).collect())
            }
            HeatSource::Attention => Ok(normalize_max(&cls_attention(model, &sample.image)?)),
        }
    }

    pub fn heatmap(&self, model: &Model, sample: &Sample, index: u64) -> Result<Heatmap> {
        let v = &model.cfg.vit;
        let grid = (v.image_height / v.patch_size, v.image_width / v.patch_size);
        upsample(
            &self.scores(model, sample, index)?,
            grid,
            v.image_height,
            v.image_width,
            Interpolation::Bilinear,
        )
    }
}

/// Mean segmentation quality of each source's heatmaps against the region masks.
pub fn localization(
    model: &Model,
    samples: &[Sample],
    sources: &[HeatSource],
    binarize: Binarize,
) -> Result<Vec<(String, SegmentationResult)>> {
    sources
        .iter()
        .map(|src| {
            let per = samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    segmentation_metrics(&src.heatmap(model, s, i as u64)?, &s.mask, binarize)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((src.name(), SegmentationResult::mean(&per)))
        })
        .collect()
}

pub fn localization_csv(rows: &[(String, SegmentationResult)]) -> String {
    let mut out = format!("method,{}\n", SegmentationResult::csv_header());
    for (name, r) in rows {
        out.push_str(&format!("{name},{}\n", r.csv_row()));
    }
    out
}
