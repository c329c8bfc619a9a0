//! Group-by-group schedule: train interpreter j with REINFORCE, freeze it,
//! then fine-tune the blocks of groups j.. with cross-entropy.
//!
//! Every finished epoch appends one line to the training log:
//!
//! ```text
//! phase=backbone epoch=3 loss=0.412345 accuracy=0.912500
//! phase=policy group=1 epoch=2 reward=0.321000 accuracy=0.975000 keep=0.5625,0.5625,0.5625
//! phase=blocks group=1 epoch=1 loss=0.051234 accuracy=0.987500 keep=0.5000,0.5000,0.5000
//! ```
//!
//! Groups are numbered from 1. `keep` lists the mean live-patch fraction
//! inside each group's blocks.

use std::io::Write;

use crate::error::{contract_err, Error, Result};
use crate::gradcore::{ParamId, Rng};
use crate::harness::synthetic::Sample;
use crate::model::Model;

use super::finetune::{backbone_step, finetune_step};
use super::optim::Adam;
use super::reinforce::reinforce_step;
use super::reward::RewardConfig;

pub const INTERPRETER_LR: f64 = 1e-3;
pub const BLOCK_LR: f64 = 4e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumSchedule {
    /// `(interpreter epochs, block epochs)` per group.
    pub epochs: Vec<(usize, usize)>,
    pub batch_size: usize,
    pub interpreter_lr: f64,
    pub block_lr: f64,
    pub reward: RewardConfig,
    /// Policy draws per image in each REINFORCE step.
    pub samples_per_image: usize,
}

impl CurriculumSchedule {
    pub fn uniform(groups: usize, interpreter_epochs: usize, block_epochs: usize) -> Self {
        CurriculumSchedule {
            epochs: vec![(interpreter_epochs, block_epochs); groups],
            batch_size: 16,
            interpreter_lr: INTERPRETER_LR,
            block_lr: BLOCK_LR,
            reward: RewardConfig::default(),
            samples_per_image: 1,
        }
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        if self.epochs.len() != model.cfg.groups.groups {
            return Err(Error::Config(format!(
                "schedule covers {} groups, model has {}",
                self.epochs.len(),
                model.cfg.groups.groups
            )));
        }
        if self.batch_size == 0 || self.samples_per_image == 0 {
            return Err(Error::Config(
                "batch size and samples per image must be positive".into(),
            ));
        }
        if !(self.interpreter_lr >= 0.0 && self.block_lr >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        self.reward.validate()
    }

    fn phase_epochs(&self, group: usize, phase: Phase) -> usize {
        match phase {
            Phase::Policy => self.epochs[group].0,
            Phase::Blocks => self.epochs[group].1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Policy,
    Blocks,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Policy => "policy",
            Phase::Blocks => "blocks",
        }
    }
}

/// Position of the next epoch to run; `group == groups` once finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cursor {
    pub group: usize,
    pub phase: Phase,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub cursor: Cursor,
    pub rng: Rng,
    /// Optimizer of the phase in progress.
    pub adam: Option<Adam>,
}

impl TrainState {
    pub fn new(seed: u64) -> Self {
        TrainState {
            cursor: Cursor {
                group: 0,
                phase: Phase::Policy,
                epoch: 0,
            },
            rng: Rng::derive(seed, &[0xC0]),
            adam: None,
        }
    }

    pub fn is_done(&self, schedule: &CurriculumSchedule) -> bool {
        self.cursor.group >= schedule.epochs.len()
    }

    /// Moves past finished or empty phases.
    fn settle(&mut self, schedule: &CurriculumSchedule) {
        while !self.is_done(schedule)
            && self.cursor.epoch >= schedule.phase_epochs(self.cursor.group, self.cursor.phase)
        {
            self.adam = None;
            self.cursor = match self.cursor.phase {
                Phase::Policy => Cursor {
                    phase: Phase::Blocks,
                    epoch: 0,
                    ..self.cursor
                },
                Phase::Blocks => Cursor {
                    group: self.cursor.group + 1,
                    phase: Phase::Policy,
                    epoch: 0,
                },
            };
        }
    }
}

fn batches(n: usize, batch: usize) -> usize {
    n.div_ceil(batch)
}

fn fmt_keep(keep_sum: &[f64], count: usize) -> String {
    keep_sum
        .iter()
        .map(|k| format!("{:.4}", k / count.max(1) as f64))
        .collect::<Vec<_>>()
        .join(",")
}

/// Parameters that must stay fixed during a phase.
fn frozen_ids(model: &Model, trainable: &[ParamId]) -> Vec<ParamId> {
    model
        .store
        .ids()
        .filter(|id| !trainable.contains(id))
        .collect()
}

/// Runs the next epoch of the curriculum. Returns `false` once the schedule is exhausted.
pub fn train_epoch(
    model: &mut Model,
    train: &[Sample],
    schedule: &CurriculumSchedule,
    state: &mut TrainState,
    log: &mut dyn Write,
) -> Result<bool> {
    schedule.validate(model)?;
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    state.settle(schedule);
    if state.is_done(schedule) {
        return Ok(false);
    }
    let Cursor {
        group,
        phase,
        epoch,
    } = state.cursor;
    let steps = batches(train.len(), schedule.batch_size);
    let epochs = schedule.phase_epochs(group, phase);
    let (trainable, lr) = match phase {
        Phase::Policy => (model.interpreter_ids(group), schedule.interpreter_lr),
        Phase::Blocks => (model.block_ids_from(group), schedule.block_lr),
    };
    let adam = state
        .adam
        .get_or_insert_with(|| Adam::new(&model.store, lr, (epochs * steps) as u64));
    let frozen = frozen_ids(model, &trainable);
    let before = model.store.digest(&frozen);

    let mut order: Vec<usize> = (0..train.len()).collect();
    state.rng.shuffle(&mut order);
    let line = match phase {
        Phase::Policy => {
            let mut total = super::reinforce::PolicyStepStats::default();
            for chunk in order.chunks(schedule.batch_size) {
                let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
                let s = reinforce_step(
                    model,
                    &batch,
                    group,
                    &schedule.reward,
                    schedule.samples_per_image,
                    adam,
                    &mut state.rng,
                )?;
                total.merge(&s);
            }
            format!(
                "phase=policy group={} epoch={} reward={:.6} accuracy={:.6} keep={}",
                group + 1,
                epoch + 1,
                total.reward_sum / total.episodes as f64,
                total.correct as f64 / total.episodes as f64,
                fmt_keep(&total.keep_sum, total.episodes)
            )
        }
        Phase::Blocks => {
            let mut total = super::finetune::SupervisedStats::default();
            for chunk in order.chunks(schedule.batch_size) {
                let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
                total.merge(&finetune_step(model, &batch, group, adam)?);
            }
            format!(
                "phase=blocks group={} epoch={} loss={:.6} accuracy={:.6} keep={}",
                group + 1,
                epoch + 1,
                total.loss_sum / total.samples as f64,
                total.correct as f64 / total.samples as f64,
                fmt_keep(&total.keep_sum, total.samples)
            )
        }
    };
    if model.store.digest(&frozen) != before {
        return Err(contract_err(format!(
            "frozen parameters changed during {} phase of group {}",
            phase.tag(),
            group + 1
        )));
    }
    writeln!(log, "{line}")?;
    state.cursor.epoch += 1;
    state.settle(schedule);
    Ok(true)
}

/// Runs the remaining curriculum, or at most `max_epochs` more epochs.
pub fn train_curriculum(
    model: &mut Model,
    train: &[Sample],
    schedule: &CurriculumSchedule,
    state: &mut TrainState,
    log: &mut dyn Write,
    max_epochs: Option<usize>,
) -> Result<()> {
    let mut done = 0;
    while max_epochs.map_or(true, |m| done < m) && train_epoch(model, train, schedule, state, log)?
    {
        done += 1;
    }
    Ok(())
}

/// Trains the dense backbone (all of its parameters) with cross-entropy.
pub fn pretrain_backbone(
    model: &mut Model,
    train: &[Sample],
    epochs: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut Rng,
    log: &mut dyn Write,
) -> Result<()> {
    if batch_size == 0 || train.is_empty() {
        return Err(Error::Config(
            "backbone training needs data and a positive batch size".into(),
        ));
    }
    let steps = batches(train.len(), batch_size);
    let mut adam = Adam::new(&model.store, lr, (epochs * steps) as u64).with_warmup(steps as u64);
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.shuffle(&mut order);
        let mut total = super::finetune::SupervisedStats::default();
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            total.merge(&backbone_step(model, &batch, &mut adam)?);
        }
        writeln!(
            log,
            "phase=backbone epoch={} loss={:.6} accuracy={:.6}",
            epoch + 1,
            total.loss_sum / total.samples as f64,
            total.correct as f64 / total.samples as f64
        )?;
    }
    Ok(())
}
