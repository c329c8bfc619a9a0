//! Training: the keep-ratio reward, self-critical REINFORCE for the
//! interpreters, cross-entropy fine-tuning and the group curriculum.

pub mod curriculum;
pub mod finetune;
pub mod optim;
pub mod reinforce;
pub mod reward;

pub use curriculum::{
    pretrain_backbone, train_curriculum, train_epoch, CurriculumSchedule, Cursor, Phase,
    TrainState, BLOCK_LR, INTERPRETER_LR,
};
pub use finetune::{
    backbone_step, finetune_policies, finetune_step, supervised_step, SupervisedStats,
};
pub use optim::Adam;
pub use reinforce::{reinforce_step, self_critical_episode, EpisodeRecord, PolicyStepStats};
pub use reward::{reward, RewardConfig};
