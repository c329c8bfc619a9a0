//! Shared setup for the examples that need a trained model.

#![allow(dead_code)]

use std::path::Path;

use iared::harness::checkpoint::load_checkpoint;
use iared::harness::config::RunConfig;
use iared::harness::pipeline::{self, RunDir};
use iared::harness::synthetic::Dataset;
use iared::model::Model;

/// A configuration small enough to train in well under a minute.
pub fn quick_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(&[
        "train_samples=320",
        "test_samples=100",
        "backbone_epochs=3",
        "interpreter_epochs=2",
        "block_epochs=2",
    ])
    .unwrap();
    cfg
}

/// Loads the checkpoint named by the first argument (evaluated under the
/// default configuration), or trains the quick configuration from scratch.
pub fn model_and_data() -> iared::Result<(Model, Dataset)> {
    if let Some(path) = std::env::args().nth(1) {
        let cfg = RunConfig::default();
        let model = load_checkpoint(Path::new(&path))?.model;
        return Ok((model, pipeline::dataset(&cfg)?));
    }
    let cfg = quick_config();
    let dir = tempfile::tempdir()?;
    eprintln!("no checkpoint given; training the quick configuration");
    let out = pipeline::train(&cfg, &RunDir::new(dir.path()), None)?;
    Ok((out.model, pipeline::dataset(&cfg)?))
}
