use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use rigmotion::augment::derive_seed;
use rigmotion::denoiser::{ConditionInput, ConditionProvider, ConditionRegistry, Denoiser, Stage, TrainConfig, TrainingExample};
use rigmotion::skeleton::Motion;
use serde::{Deserialize, Serialize};

use super::{load_manifest, read_bvh, say, write_text, Command};
use crate::config::{ModelSettings, RunConfig};
use crate::error::CliError;

/// Condition providers a checkpoint was trained with. Stored in the
/// checkpoint so sampling embeds conditions the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    pub pose: String,
    pub text: String,
    pub seed: u64,
}

impl Conditions {
    pub fn from_settings(m: &ModelSettings) -> Self {
        Self {
            pose: m.pose_condition.clone(),
            text: m.text_condition.clone(),
            seed: m.condition_seed,
        }
    }

    fn provider(&self, name: &str, model: &Denoiser) -> Result<Box<dyn ConditionProvider>, CliError> {
        let c = model.config();
        ConditionRegistry::builtin()
            .create(name, c.cond_dim, c.j_max, self.seed)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn pose_provider(&self, model: &Denoiser) -> Result<Box<dyn ConditionProvider>, CliError> {
        self.provider(&self.pose, model)
    }

    pub fn text_provider(&self, model: &Denoiser) -> Result<Box<dyn ConditionProvider>, CliError> {
        self.provider(&self.text, model)
    }
}

pub type Metadata = BTreeMap<String, serde_json::Value>;

/// Loads a checkpoint and the conditions stored with it (falling back to
/// `settings` for checkpoints written elsewhere).
pub fn load_checkpoint(path: Option<&Path>, settings: &ModelSettings) -> Result<(Denoiser, Conditions, Metadata), CliError> {
    let path = path.ok_or_else(|| CliError::MissingCheckpoint("no checkpoint given".into()))?;
    if !path.exists() {
        return Err(CliError::MissingCheckpoint(format!("{} does not exist", path.display())));
    }
    let (model, meta) = Denoiser::load(path).map_err(|e| CliError::data(path, e))?;
    let conditions = match meta.get("conditions") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| CliError::data(path, e))?,
        None => Conditions::from_settings(settings),
    };
    Ok((model, conditions, meta))
}

fn model_error(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn pose_example(motion: Motion, provider: &dyn ConditionProvider) -> Result<TrainingExample, CliError> {
    let pose_conds = (0..motion.frames())
        .map(|f| {
            provider.embed(ConditionInput::Pose {
                rig: motion.rig(),
                rotations: motion.frame(f),
            })
        })
        .collect::<Result<_, _>>()
        .map_err(model_error)?;
    Ok(TrainingExample {
        motion,
        pose_conds,
        motion_cond: None,
    })
}

/// One example per caption level and window of at most `f_max` frames.
fn motion_examples(motion: &Motion, captions: &[&str], f_max: usize, provider: &dyn ConditionProvider) -> Result<Vec<TrainingExample>, CliError> {
    let conds: Vec<Option<Vec<f64>>> = if captions.is_empty() {
        vec![None]
    } else {
        captions
            .iter()
            .map(|c| provider.embed(ConditionInput::Text(c)).map(Some))
            .collect::<Result<_, _>>()
            .map_err(model_error)?
    };
    let mut out = Vec::new();
    for start in (0..motion.frames()).step_by(f_max) {
        let window = motion.slice(start, f_max.min(motion.frames() - start));
        for c in &conds {
            out.push(TrainingExample {
                motion: window.clone(),
                pose_conds: Vec::new(),
                motion_cond: c.clone(),
            });
        }
    }
    Ok(out)
}

/// Trains one stage and writes `checkpoint.json` and `loss.csv`.
pub struct Train;

impl Command for Train {
    fn name(&self) -> &'static str {
        "train"
    }

    fn run(&self, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
        let stage = config.train.stage;
        let seed = config.seed();
        let (mut model, conditions) = match (&config.checkpoint, stage) {
            (None, Stage::Motion) => {
                return Err(CliError::MissingCheckpoint(
                    "the motion stage starts from a pose-stage checkpoint; pass --checkpoint".into(),
                ))
            }
            (None, Stage::PoseOnly) => {
                let model = Denoiser::new(config.model.denoiser_config()?, derive_seed(seed, 1)).map_err(|e| CliError::Config(e.to_string()))?;
                (model, Conditions::from_settings(&config.model))
            }
            (Some(p), _) => {
                let (model, c, _) = load_checkpoint(Some(p), &config.model)?;
                (model, c)
            }
        };
        if stage == Stage::PoseOnly && model.stage() == Stage::Motion {
            return Err(CliError::Config("cannot train the pose stage of a motion-stage checkpoint".into()));
        }
        let manifest = load_manifest(RunConfig::require(&config.manifest, "manifest")?)?;
        let dir = config.output_dir()?.to_path_buf();
        config.persist()?;

        let docs: Vec<_> = manifest
            .entries
            .par_iter()
            .map(|e| read_bvh(&manifest.resolve(e)))
            .collect::<Result<_, _>>()?;
        let examples: Vec<TrainingExample> = match stage {
            Stage::PoseOnly => {
                let provider = conditions.pose_provider(&model)?;
                docs.into_iter().map(|d| pose_example(d.motion, provider.as_ref())).collect::<Result<_, _>>()?
            }
            Stage::Motion => {
                let provider = conditions.text_provider(&model)?;
                let f_max = model.config().f_max;
                let mut all = Vec::new();
                for (doc, entry) in docs.iter().zip(&manifest.entries) {
                    let captions: Vec<&str> = entry.captions.levels().into_iter().filter(|c| !c.trim().is_empty()).collect();
                    all.extend(motion_examples(&doc.motion, &captions, f_max, provider.as_ref())?);
                }
                all
            }
        };
        log::info!("training {stage} stage on {} examples for {} steps", examples.len(), config.train.steps);

        let tc = TrainConfig {
            steps: config.train.steps,
            batch_size: config.train.batch_size,
            seed: derive_seed(seed, 2),
            optimizer: config.train.optimizer,
        };
        let report = model.train(&examples, stage, &tc).map_err(model_error)?;

        let mut meta = Metadata::new();
        meta.insert("stage".into(), serde_json::json!(stage));
        meta.insert("steps".into(), serde_json::json!(config.train.steps));
        meta.insert("seed".into(), serde_json::json!(seed));
        meta.insert("conditions".into(), serde_json::to_value(&conditions).map_err(model_error)?);
        let ckpt = dir.join("checkpoint.json");
        model.save(&ckpt, meta).map_err(|e| CliError::data(&ckpt, e))?;

        let smoothed = report.smoothed(config.train.smoothing);
        let mut csv = String::from("step,loss,smoothed\n");
        for (i, (l, s)) in report.losses.iter().zip(&smoothed).enumerate() {
            let _ = writeln!(csv, "{},{l},{s}", i + 1);
        }
        write_text(&dir.join("loss.csv"), &csv)?;
        match (smoothed.first(), smoothed.last()) {
            (Some(a), Some(b)) => say(out, format!("trained {stage} stage for {} steps: smoothed loss {a:.6} -> {b:.6}", report.losses.len()))?,
            _ => say(out, format!("trained {stage} stage for 0 steps"))?,
        }
        Ok(())
    }
}
