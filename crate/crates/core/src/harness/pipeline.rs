//! End-to-end training runs backed by an output directory.
//!
//! A run directory holds:
//!
//! - `config.txt`: the effective configuration;
//! - `train.log`: one line per finished epoch;
//! - `backbone.ckpt`: the dense backbone after pretraining;
//! - `model.ckpt`: the latest model together with the curriculum state.
//!
//! `model.ckpt` is rewritten after every epoch, so an interrupted run
//! continues from the last finished epoch.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::gradcore::Rng;
use crate::harness::checkpoint::{load_checkpoint, save_checkpoint};
use crate::harness::config::RunConfig;
use crate::harness::synthetic::{gen_synthetic, Dataset, Sample};
use crate::model::Model;
use crate::policy::{pretrain_backbone, train_epoch, TrainState};

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }
    pub fn log(&self) -> PathBuf {
        self.root.join("train.log")
    }
    pub fn backbone(&self) -> PathBuf {
        self.root.join("backbone.ckpt")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("model.ckpt")
    }
}

pub fn dataset(cfg: &RunConfig) -> Result<Dataset> {
    gen_synthetic(&cfg.data()?)
}

/// Initialises a model and trains its dense backbone.
pub fn build_backbone(cfg: &RunConfig, train: &[Sample], log: &mut dyn Write) -> Result<Model> {
    let mut model = Model::init(cfg.model()?, &mut Rng::derive(cfg.seed, &[0xB0]))?;
    pretrain_backbone(
        &mut model,
        train,
        cfg.backbone_epochs,
        cfg.batch_size,
        cfg.backbone_lr,
        &mut Rng::derive(cfg.seed, &[0xB1]),
        log,
    )?;
    Ok(model)
}

/// Runs curriculum epochs until the schedule ends or `max_epochs` have run.
/// Returns the number of epochs run.
pub fn run_curriculum(
    cfg: &RunConfig,
    model: &mut Model,
    state: &mut TrainState,
    train: &[Sample],
    log: &mut dyn Write,
    max_epochs: Option<usize>,
    mut after_epoch: impl FnMut(&Model, &TrainState) -> Result<()>,
) -> Result<usize> {
    let schedule = cfg.schedule()?;
    let mut done = 0;
    while max_epochs.map_or(true, |m| done < m) && train_epoch(model, train, &schedule, state, log)?
    {
        done += 1;
        after_epoch(model, state)?;
    }
    Ok(done)
}

/// Everything a finished or paused run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub state: TrainState,
    pub backbone: Model,
    pub finished: bool,
    pub epochs_run: usize,
}

fn append(path: &Path) -> Result<fs::File> {
    Ok(OpenOptions::new().create(true).append(true).open(path)?)
}

/// Trains into `dir`, resuming from `model.ckpt` when it holds an
/// unfinished curriculum for the same configuration.
pub fn train(cfg: &RunConfig, dir: &RunDir, max_epochs: Option<usize>) -> Result<TrainOutcome> {
    let model_cfg = cfg.model()?;
    let schedule = cfg.schedule()?;
    let data = dataset(cfg)?;
    fs::create_dir_all(&dir.root)?;

    let resumed = if dir.checkpoint().exists() {
        let ck = load_checkpoint(dir.checkpoint())?;
        if ck.model.cfg != model_cfg {
            return Err(Error::Config(format!(
                "{} was written with a different model configuration",
                dir.checkpoint().display()
            )));
        }
        let state = ck.train.ok_or_else(|| {
            Error::Config(format!(
                "{} holds no curriculum state",
                dir.checkpoint().display()
            ))
        })?;
        Some((ck.model, state, load_checkpoint(dir.backbone())?.model))
    } else {
        None
    };
    let (mut model, mut state, backbone) = match resumed {
        Some(r) => r,
        None => {
            fs::write(dir.config(), cfg.dump())?;
            let mut log = fs::File::create(dir.log())?;
            let backbone = build_backbone(cfg, &data.train, &mut log)?;
            save_checkpoint(dir.backbone(), &backbone, None)?;
            let state = TrainState::new(cfg.seed);
            save_checkpoint(dir.checkpoint(), &backbone, Some(&state))?;
            (backbone.clone(), state, backbone)
        }
    };

    let mut log = append(&dir.log())?;
    let ckpt = dir.checkpoint();
    let epochs_run = run_curriculum(
        cfg,
        &mut model,
        &mut state,
        &data.train,
        &mut log,
        max_epochs,
        |m, s| save_checkpoint(&ckpt, m, Some(s)),
    )?;
    Ok(TrainOutcome {
        finished: state.is_done(&schedule),
        model,
        state,
        backbone,
        epochs_run,
    })
}
