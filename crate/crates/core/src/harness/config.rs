//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Every key is typed;
//! an unknown key or an unparsable value is a configuration error. The same
//! syntax is accepted for command-line overrides.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::synthetic::SyntheticSpec;
use crate::interpreter::GroupConfig;
use crate::model::ModelConfig;
use crate::policy::{CurriculumSchedule, RewardConfig, BLOCK_LR, INTERPRETER_LR};
use crate::vit::VitConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub classes: usize,
    pub groups: usize,
    pub interpreter_heads: usize,
    pub interpreter_bias: bool,
    pub threshold: f64,
    pub region: usize,
    pub region_tile: usize,
    pub region_share: f64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub backbone_epochs: usize,
    pub backbone_lr: f64,
    pub interpreter_epochs: usize,
    pub block_epochs: usize,
    pub batch_size: usize,
    pub interpreter_lr: f64,
    pub block_lr: f64,
    pub tau: f64,
    pub squared_reward: bool,
    pub samples_per_image: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::toy();
        let d = SyntheticSpec::default();
        let r = RewardConfig::default();
        RunConfig {
            seed: 7,
            image_size: m.vit.image_height,
            patch_size: m.vit.patch_size,
            embed_dim: m.vit.embed_dim,
            depth: m.vit.depth,
            heads: m.vit.heads,
            classes: m.vit.classes,
            groups: m.groups.groups,
            interpreter_heads: m.interpreter_heads,
            interpreter_bias: m.interpreter_bias,
            threshold: m.groups.threshold,
            region: d.region,
            region_tile: d.tile,
            region_share: d.share,
            train_samples: d.train,
            test_samples: d.test,
            backbone_epochs: 3,
            backbone_lr: 1e-3,
            interpreter_epochs: 3,
            block_epochs: 6,
            batch_size: 16,
            interpreter_lr: INTERPRETER_LR,
            block_lr: BLOCK_LR,
            tau: r.tau,
            squared_reward: r.squared,
            samples_per_image: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key}")))
}

macro_rules! keys {
    ($($name:ident),* $(,)?) => {
        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($name)),*];

            /// Sets one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($name) => self.$name = parse(key, value)?,)*
                    _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
                }
                Ok(())
            }

            /// Effective configuration in the same format [`RunConfig::parse`] reads.
            pub fn dump(&self) -> String {
                let mut out = String::new();
                $(writeln!(out, "{} = {}", stringify!($name), self.$name).expect("write to string");)*
                out
            }
        }
    };
}

keys!(
    seed,
    image_size,
    patch_size,
    embed_dim,
    depth,
    heads,
    classes,
    groups,
    interpreter_heads,
    interpreter_bias,
    threshold,
    region,
    region_tile,
    region_share,
    train_samples,
    test_samples,
    backbone_epochs,
    backbone_lr,
    interpreter_epochs,
    block_epochs,
    batch_size,
    interpreter_lr,
    block_lr,
    tau,
    squared_reward,
    samples_per_image,
);

impl RunConfig {
    /// Applies `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o.as_ref().split_once('=').ok_or_else(|| {
                Error::Config(format!("override {:?} is not key=value", o.as_ref()))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelConfig> {
        if self.groups == 0 || self.depth % self.groups != 0 {
            return Err(Error::Config(format!(
                "{} groups do not divide depth {}",
                self.groups, self.depth
            )));
        }
        let cfg = ModelConfig {
            vit: VitConfig {
                image_height: self.image_size,
                image_width: self.image_size,
                channels: 3,
                patch_size: self.patch_size,
                embed_dim: self.embed_dim,
                depth: self.depth,
                heads: self.heads,
                classes: self.classes,
            },
            groups: GroupConfig {
                groups: self.groups,
                blocks_per_group: self.depth / self.groups,
                threshold: self.threshold,
            },
            interpreter_heads: self.interpreter_heads,
            interpreter_bias: self.interpreter_bias,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn data(&self) -> Result<SyntheticSpec> {
        let spec = SyntheticSpec {
            height: self.image_size,
            width: self.image_size,
            classes: self.classes,
            region: self.region,
            tile: self.region_tile,
            share: self.region_share,
            train: self.train_samples,
            test: self.test_samples,
            seed: self.seed,
            ..SyntheticSpec::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn schedule(&self) -> Result<CurriculumSchedule> {
        let reward = RewardConfig {
            tau: self.tau,
            squared: self.squared_reward,
        };
        reward.validate()?;
        if self.batch_size == 0 || self.samples_per_image == 0 {
            return Err(Error::Config(
                "batch_size and samples_per_image must be positive".into(),
            ));
        }
        Ok(CurriculumSchedule {
            batch_size: self.batch_size,
            interpreter_lr: self.interpreter_lr,
            block_lr: self.block_lr,
            reward,
            samples_per_image: self.samples_per_image,
            ..CurriculumSchedule::uniform(self.groups, self.interpreter_epochs, self.block_epochs)
        })
    }
}
