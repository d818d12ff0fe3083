//! Diffusion denoiser over per-joint rotation tokens.
//!
//! Tokens are laid out frame-major, one per (frame, joint). Spatial blocks
//! attend across the joints of a frame, temporal blocks across the frames of
//! a joint. Training runs in two stages: a pose stage with spatial blocks
//! only, then a motion stage that freezes everything else and learns the
//! temporal blocks.

mod checkpoint;
mod condition;
mod config;
mod model;
mod sample;
mod schedule;
mod train;

use thiserror::Error;

use crate::encodings::EncodingError;
use crate::skeleton::RigError;

pub use checkpoint::CHECKPOINT_FORMAT_VERSION;
pub use condition::{ConditionInput, ConditionProvider, ConditionRegistry, HashBagOfWords, PoseProjection, ProviderFactory};
pub use config::{DenoiserConfig, Stage, TrainConfig, ROTATION_DIM};
pub use model::{Denoiser, Forward, Normalizer, SampleInput};
pub use sample::{guided, BlendCurve, BlendRegistry, CosineBlend, LinearBlend, LongSample, SampleRequest};
pub use schedule::{CosineSchedule, LinearSchedule, NoiseSchedule, Posterior, ScheduleKind, ScheduleRegistry};
pub use train::{smooth, TrainReport, TrainingExample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenoiserError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{requested} stage requested on a {model} stage model")]
    StageMismatch { requested: Stage, model: Stage },
    #[error("model has no normalization statistics; train it or load a trained checkpoint")]
    UntrainedModel,
    #[error("frozen parameter `{0}` changed during motion-stage training")]
    FrozenWeightViolation(String),
    #[error("overlap of {overlap} frames does not fit chunks of {chunk}")]
    OverlapTooLarge { overlap: usize, chunk: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Rig(#[from] RigError),
}
