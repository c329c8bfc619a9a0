//! Heatmaps from interpreter scores, their segmentation quality, and pixmap output.

pub mod heatmap;
pub mod metrics;
pub mod pixmap;
pub mod render;

pub use heatmap::{assemble_scores, normalize_max, upsample, Heatmap, Interpolation};
pub use metrics::{metrics_from_prediction, segmentation_metrics, Binarize, SegmentationResult};
pub use pixmap::Pixmap;
pub use render::{heat_colour, overlay, raw_pixmap, render_heatmap, OVERLAY_ALPHA};
