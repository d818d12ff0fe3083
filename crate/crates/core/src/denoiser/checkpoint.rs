use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{DenoiserConfig, Stage};
use super::model::{Denoiser, Normalizer};
use super::schedule::ScheduleRegistry;
use super::DenoiserError;
use crate::nn::ParamStore;

/// Version written by this build; files with a higher version are refused.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: DenoiserConfig,
    stage: Stage,
    #[serde(default)]
    normalizer: Option<Normalizer>,
    params: ParamStore,
    #[serde(default)]
    metadata: BTreeMap<String, serde_json::Value>,
}

impl Denoiser {
    pub fn to_json(&self, metadata: BTreeMap<String, serde_json::Value>) -> Result<String, DenoiserError> {
        let file = CheckpointFile {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            stage: self.stage,
            normalizer: self.normalizer.clone(),
            params: self.params.clone(),
            metadata,
        };
        serde_json::to_string(&file).map_err(|e| DenoiserError::Checkpoint(e.to_string()))
    }

    /// Reads a checkpoint and its free-form metadata. Unknown fields are
    /// ignored so newer writers stay readable.
    pub fn from_json(text: &str) -> Result<(Self, BTreeMap<String, serde_json::Value>), DenoiserError> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| DenoiserError::Checkpoint(e.to_string()))?;
        if file.format_version > CHECKPOINT_FORMAT_VERSION {
            return Err(DenoiserError::Checkpoint(format!(
                "format version {} is newer than supported {}",
                file.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        file.config.validate()?;
        let schedule = ScheduleRegistry::builtin().build(&file.config.schedule, file.config.diffusion_steps)?;
        let reference = {
            let mut m = Denoiser::new(file.config.clone(), 0)?;
            if file.stage == Stage::Motion {
                m.enter_motion_stage(0);
            }
            m.params
        };
        for (name, value) in reference.iter() {
            match file.params.get(name) {
                Some(p) if p.shape() == value.shape() && p.data.len() == p.rows * p.cols => {}
                Some(_) => return Err(DenoiserError::Checkpoint(format!("parameter `{name}` has the wrong shape"))),
                None => return Err(DenoiserError::Checkpoint(format!("parameter `{name}` is missing"))),
            }
        }
        let model = Denoiser {
            config: file.config,
            stage: file.stage,
            params: file.params,
            normalizer: file.normalizer,
            schedule,
        };
        Ok((model, file.metadata))
    }

    pub fn save(&self, path: &Path, metadata: BTreeMap<String, serde_json::Value>) -> Result<(), DenoiserError> {
        std::fs::write(path, self.to_json(metadata)?).map_err(|e| DenoiserError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<(Self, BTreeMap<String, serde_json::Value>), DenoiserError> {
        let text = std::fs::read_to_string(path).map_err(|e| DenoiserError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
