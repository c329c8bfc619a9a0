//! Comparison strategies: fixed-rule token dropping, magnitude pruning and
//! the pruning/dropping trade-off sweep.

pub mod drop;
pub mod prune;
pub mod sweep;

pub use drop::{
    attention_drop, cls_attention, drop_count, drop_lowest, learned_drop, random_drop,
    temporal_difference_drop, temporal_difference_scores, DropKind, DropStrategy,
};
pub use prune::{kept_weights, linear_layers, magnitude_prune, prune_layers};
pub use sweep::{
    accuracy_at, combined_sweep, threshold_csv, threshold_sweep, CurvePoint, ThresholdRow,
    TradeoffCurves,
};
