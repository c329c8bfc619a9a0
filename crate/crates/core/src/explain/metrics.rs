use crate::error::{shape_err, Result};
use crate::image::Mask;

use super::heatmap::Heatmap;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Binarize {
    /// Foreground where the heatmap exceeds its own mean.
    #[default]
    Mean,
    Fixed(f64),
}

impl Binarize {
    pub fn threshold(self, heatmap: &Heatmap) -> f64 {
        match self {
            Binarize::Mean => heatmap.mean(),
            Binarize::Fixed(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentationResult {
    pub pixel_accuracy: f64,
    pub mean_accuracy: f64,
    pub mean_iou: f64,
    pub foreground_accuracy: f64,
    pub background_accuracy: f64,
    pub foreground_iou: f64,
    pub background_iou: f64,
}

impl SegmentationResult {
    pub fn csv_header() -> &'static str {
        "pixel_accuracy,mean_accuracy,mean_iou,fg_accuracy,bg_accuracy,fg_iou,bg_iou"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.pixel_accuracy,
            self.mean_accuracy,
            self.mean_iou,
            self.foreground_accuracy,
            self.background_accuracy,
            self.foreground_iou,
            self.background_iou
        )
    }

    /// Per-field mean over images.
    pub fn mean(results: &[SegmentationResult]) -> SegmentationResult {
        let n = results.len().max(1) as f64;
        let avg = |f: fn(&SegmentationResult) -> f64| results.iter().map(f).sum::<f64>() / n;
        SegmentationResult {
            pixel_accuracy: avg(|r| r.pixel_accuracy),
            mean_accuracy: avg(|r| r.mean_accuracy),
            mean_iou: avg(|r| r.mean_iou),
            foreground_accuracy: avg(|r| r.foreground_accuracy),
            background_accuracy: avg(|r| r.background_accuracy),
            foreground_iou: avg(|r| r.foreground_iou),
            background_iou: avg(|r| r.background_iou),
        }
    }
}

/// `hit / total`, or 1 when both the class and its prediction are absent
/// and 0 when only the class is absent.
fn ratio(hit: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

pub fn metrics_from_prediction(pred: &[bool], truth: &Mask) -> Result<SegmentationResult> {
    if pred.len() != truth.data.len() {
        return Err(shape_err(format!(
            "prediction of {} pixels against a {}x{} mask",
            pred.len(),
            truth.height,
            truth.width
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(&truth.data) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let total = pred.len();
    // recall of an absent class: 1 if it is also never predicted, else 0
    let recall = |hit: usize, class: usize, wrong: usize| {
        if class == 0 {
            if wrong == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            hit as f64 / class as f64
        }
    };
    let fg_acc = recall(tp, tp + fn_, fp);
    let bg_acc = recall(tn, tn + fp, fn_);
    let fg_iou = ratio(tp, tp + fp + fn_);
    let bg_iou = ratio(tn, tn + fp + fn_);
    Ok(SegmentationResult {
        pixel_accuracy: ratio(tp + tn, total),
        mean_accuracy: 0.5 * (fg_acc + bg_acc),
        mean_iou: 0.5 * (fg_iou + bg_iou),
        foreground_accuracy: fg_acc,
        background_accuracy: bg_acc,
        foreground_iou: fg_iou,
        background_iou: bg_iou,
    })
}

/// Binarizes `heatmap` (strictly above the threshold is foreground) and
/// scores it against `truth`.
pub fn segmentation_metrics(
    heatmap: &Heatmap,
    truth: &Mask,
    binarize: Binarize,
) -> Result<SegmentationResult> {
    if heatmap.height != truth.height || heatmap.width != truth.width {
        return Err(shape_err(format!(
            "{}x{} heatmap against a {}x{} mask",
            heatmap.height, heatmap.width, truth.height, truth.width
        )));
    }
    let t = binarize.threshold(heatmap);
    let pred: Vec<bool> = heatmap.data.iter().map(|&v| v > t).collect();
    metrics_from_prediction(&pred, truth)
}
