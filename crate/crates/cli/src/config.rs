use std::path::{Path, PathBuf};

use rigmotion::augment::AugmentationPolicy;
use rigmotion::bvh::PreprocessConfig;
use rigmotion::denoiser::{DenoiserConfig, Stage};
use rigmotion::metrics::EvalOptions;
use rigmotion::nn::AdamConfig;
use rigmotion::skeleton::DEFAULT_MAX_JOINTS;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SEED_ENV: &str = "RIGMOTION_SEED";

/// Everything a command reads. Loaded from `--config`, overridden by flags,
/// and written back next to the outputs with the seed filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub manifest: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub max_joints: usize,
    pub preprocess: PreprocessConfig,
    pub augment: AugmentSettings,
    pub model: ModelSettings,
    pub train: TrainSettings,
    pub sample: SampleSettings,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            manifest: None,
            output: None,
            checkpoint: None,
            max_joints: DEFAULT_MAX_JOINTS,
            preprocess: PreprocessConfig::default(),
            augment: AugmentSettings::default(),
            model: ModelSettings::default(),
            train: TrainSettings::default(),
            sample: SampleSettings::default(),
            eval: EvalSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSettings {
    /// Augmented copies per input motion; the original is always kept.
    pub variants: usize,
    pub policy: AugmentationPolicy,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        Self {
            variants: 25,
            policy: AugmentationPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub preset: String,
    /// Replaces the preset when present.
    pub config: Option<DenoiserConfig>,
    /// Condition provider for the pose stage.
    pub pose_condition: String,
    /// Condition provider for captions in the motion stage.
    pub text_condition: String,
    pub condition_seed: u64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            preset: "desk".into(),
            config: None,
            pose_condition: "pose_projection".into(),
            text_condition: "hash_bow".into(),
            condition_seed: 11,
        }
    }
}

impl ModelSettings {
    pub fn denoiser_config(&self) -> Result<DenoiserConfig, CliError> {
        let config = match &self.config {
            Some(c) => c.clone(),
            None => DenoiserConfig::preset(&self.preset).ok_or_else(|| CliError::Config(format!("unknown model preset `{}`", self.preset)))?,
        };
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub stage: Stage,
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    /// Window of the moving average written next to the raw losses.
    pub smoothing: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            stage: Stage::PoseOnly,
            steps: 2000,
            batch_size: 8,
            optimizer: AdamConfig::default(),
            smoothing: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSettings {
    /// BVH file whose rig is animated.
    pub rig: Option<PathBuf>,
    /// Frames of one sample; defaults to the model's frame limit.
    pub frames: Option<usize>,
    /// Captions; `sample` uses the first, `sample-long` one per chunk.
    pub captions: Vec<String>,
    /// BVH file holding a pose condition for pose-stage models.
    pub pose: Option<PathBuf>,
    pub pose_frame: usize,
    pub guidance: f64,
    /// Chunk count for unconditional long sampling.
    pub chunks: Option<usize>,
    pub overlap: usize,
    pub blend: String,
}

impl Default for SampleSettings {
    fn default() -> Self {
        Self {
            rig: None,
            frames: None,
            captions: Vec::new(),
            pose: None,
            pose_frame: 0,
            guidance: 2.5,
            chunks: None,
            overlap: 15,
            blend: "linear".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Manifest or directory of BVH files.
    pub reference: Option<PathBuf>,
    pub generated: Option<PathBuf>,
    pub provider: String,
    pub options: EvalOptions,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            reference: None,
            generated: None,
            provider: "fk_positions".into(),
            options: EvalOptions::default(),
        }
    }
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }

    /// Flag, then config file, then `RIGMOTION_SEED`, then 0.
    pub fn resolve_seed(&mut self, env: Option<&str>) -> Result<u64, CliError> {
        if self.seed.is_none() {
            if let Some(v) = env {
                let seed = v.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
                self.seed = Some(seed);
            }
        }
        Ok(*self.seed.get_or_insert(0))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn require<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
        value.as_deref().ok_or_else(|| CliError::Config(format!("no {what} given")))
    }

    pub fn output_dir(&self) -> Result<&Path, CliError> {
        Self::require(&self.output, "output directory")
    }

    /// Creates the output directory and stores this config in it.
    pub fn persist(&self) -> Result<PathBuf, CliError> {
        let dir = self.output_dir()?;
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join("run_config.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
