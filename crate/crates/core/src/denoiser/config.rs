use serde::{Deserialize, Serialize};

use super::DenoiserError;
use crate::encodings::{DEFAULT_REST_BANDS, DEFAULT_TREE_BRANCH, DEFAULT_TREE_DEPTH};
use crate::nn::AdamConfig;
use crate::skeleton::{DEFAULT_MAX_FRAMES, DEFAULT_MAX_JOINTS};

/// Number of rotation channels per joint (ZXY Euler angles).
pub const ROTATION_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Spatial blocks only; every frame is an independent pose.
    PoseOnly,
    /// Spatial blocks frozen, temporal blocks trained.
    Motion,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::PoseOnly => "pose_only",
            Stage::Motion => "motion",
        })
    }
}

fn default_schedule() -> String {
    "cosine".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub depth: usize,
    pub d_model: usize,
    pub heads: usize,
    #[serde(default = "DenoiserConfig::default_mlp_ratio")]
    pub mlp_ratio: usize,
    #[serde(default = "DenoiserConfig::default_j_max")]
    pub j_max: usize,
    #[serde(default = "DenoiserConfig::default_f_max")]
    pub f_max: usize,
    pub cond_dim: usize,
    #[serde(default = "DenoiserConfig::default_cfg_dropout")]
    pub cfg_dropout: f64,
    pub diffusion_steps: usize,
    #[serde(default = "default_schedule")]
    pub schedule: String,
    #[serde(default = "DenoiserConfig::default_tree_depth")]
    pub tree_max_depth: usize,
    #[serde(default = "DenoiserConfig::default_tree_branch")]
    pub tree_max_branch: usize,
    #[serde(default = "DenoiserConfig::default_rest_bands")]
    pub rest_bands: usize,
    /// Seconds per frame of sampled motions.
    #[serde(default = "DenoiserConfig::default_frame_time")]
    pub frame_time: f64,
}

impl DenoiserConfig {
    fn default_mlp_ratio() -> usize {
        4
    }
    fn default_j_max() -> usize {
        DEFAULT_MAX_JOINTS
    }
    fn default_f_max() -> usize {
        DEFAULT_MAX_FRAMES
    }
    fn default_cfg_dropout() -> f64 {
        0.1
    }
    fn default_tree_depth() -> usize {
        DEFAULT_TREE_DEPTH
    }
    fn default_tree_branch() -> usize {
        DEFAULT_TREE_BRANCH
    }
    fn default_rest_bands() -> usize {
        DEFAULT_REST_BANDS
    }
    fn default_frame_time() -> f64 {
        1.0 / 30.0
    }

    /// Full-size model: 12 blocks, width 384, 6 heads.
    pub fn reference() -> Self {
        Self {
            depth: 12,
            d_model: 384,
            heads: 6,
            mlp_ratio: 4,
            j_max: DEFAULT_MAX_JOINTS,
            f_max: DEFAULT_MAX_FRAMES,
            cond_dim: 512,
            cfg_dropout: 0.1,
            diffusion_steps: 1000,
            schedule: default_schedule(),
            tree_max_depth: DEFAULT_TREE_DEPTH,
            tree_max_branch: DEFAULT_TREE_BRANCH,
            rest_bands: DEFAULT_REST_BANDS,
            frame_time: 1.0 / 30.0,
        }
    }

    /// CPU-sized model for experiments and tests.
    pub fn desk() -> Self {
        Self {
            depth: 2,
            d_model: 64,
            heads: 4,
            cond_dim: 64,
            diffusion_steps: 50,
            ..Self::reference()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "reference" => Some(Self::reference()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), DenoiserError> {
        let bad = |m: String| Err(DenoiserError::Config(m));
        if self.depth == 0 || self.d_model == 0 || self.heads == 0 || self.mlp_ratio == 0 {
            return bad("depth, d_model, heads and mlp_ratio must be positive".into());
        }
        if self.d_model % self.heads != 0 {
            return bad(format!("d_model {} is not divisible by {} heads", self.d_model, self.heads));
        }
        if self.j_max == 0 || self.f_max == 0 || self.cond_dim == 0 {
            return bad("j_max, f_max and cond_dim must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.cfg_dropout) {
            return bad(format!("cfg_dropout {} is not a probability", self.cfg_dropout));
        }
        if self.diffusion_steps < 2 {
            return bad("at least 2 diffusion steps are needed".into());
        }
        if !(self.frame_time > 0.0) {
            return bad("frame_time must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    /// Poses per step in the pose stage, motions per step in the motion stage.
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            seed: 0,
            optimizer: AdamConfig::default(),
        }
    }
}
