use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rigmotion::bvh::BvhDocument;
use rigmotion::denoiser::{BlendRegistry, ConditionInput, Denoiser, SampleRequest, Stage};

use super::train::{load_checkpoint, Conditions};
use super::{read_bvh, say, write_doc, Command};
use crate::config::RunConfig;
use crate::error::CliError;

fn embed(model: &Denoiser, conditions: &Conditions, config: &RunConfig, caption: Option<&str>) -> Result<Option<Vec<f64>>, CliError> {
    let s = &config.sample;
    match model.stage() {
        Stage::Motion => match caption {
            Some(c) => {
                let p = conditions.text_provider(model)?;
                Ok(Some(p.embed(ConditionInput::Text(c)).map_err(|e| CliError::Config(e.to_string()))?))
            }
            None => Ok(None),
        },
        Stage::PoseOnly => {
            if caption.is_some() {
                return Err(CliError::Config("pose-stage checkpoints take a pose condition, not captions".into()));
            }
            let Some(path) = &s.pose else { return Ok(None) };
            let doc = read_bvh(path)?;
            if s.pose_frame >= doc.motion.frames() {
                return Err(CliError::Config(format!(
                    "pose frame {} of {} which has {} frames",
                    s.pose_frame,
                    path.display(),
                    doc.motion.frames()
                )));
            }
            let p = conditions.pose_provider(model)?;
            let v = p
                .embed(ConditionInput::Pose {
                    rig: doc.rig(),
                    rotations: doc.motion.frame(s.pose_frame),
                })
                .map_err(|e| CliError::data(path, e))?;
            Ok(Some(v))
        }
    }
}

struct Setup {
    model: Denoiser,
    conditions: Conditions,
    rig: rigmotion::skeleton::Rig,
    rng: ChaCha8Rng,
}

fn setup(config: &RunConfig) -> Result<Setup, CliError> {
    let (model, conditions, _) = load_checkpoint(config.checkpoint.as_deref(), &config.model)?;
    let rig_path = RunConfig::require(&config.sample.rig, "rig (a BVH file)")?;
    let rig = read_bvh(rig_path)?.rig().clone();
    config.persist()?;
    Ok(Setup {
        model,
        conditions,
        rig,
        rng: ChaCha8Rng::seed_from_u64(config.seed()),
    })
}

/// One motion of at most `f_max` frames, written to `sample.bvh`.
pub struct Sample;

impl Command for Sample {
    fn name(&self) -> &'static str {
        "sample"
    }

    fn run(&self, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
        let mut s = setup(config)?;
        let frames = config.sample.frames.unwrap_or(s.model.config().f_max);
        let cond = embed(&s.model, &s.conditions, config, config.sample.captions.first().map(String::as_str))?;
        let req = SampleRequest {
            rig: &s.rig,
            frames,
            cond: cond.as_deref(),
            guidance: config.sample.guidance,
        };
        let motion = s.model.sample(&req, &mut s.rng).map_err(|e| CliError::Data(e.to_string()))?;
        let path = config.output_dir()?.join("sample.bvh");
        write_doc(&path, &BvhDocument::from_motion(motion))?;
        say(out, format!("wrote {frames} frames to {}", path.display()))
    }
}

/// Chained chunks blended over their overlap, written to `sample_long.bvh`.
pub struct SampleLong;

impl Command for SampleLong {
    fn name(&self) -> &'static str {
        "sample-long"
    }

    fn run(&self, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
        let s_cfg = &config.sample;
        let blend = BlendRegistry::builtin().create(&s_cfg.blend).map_err(|e| CliError::Config(e.to_string()))?;
        let mut s = setup(config)?;
        let conds: Vec<Option<Vec<f64>>> = if s_cfg.captions.is_empty() {
            let n = s_cfg.chunks.ok_or_else(|| CliError::Config("give captions or a chunk count".into()))?;
            vec![embed(&s.model, &s.conditions, config, None)?; n]
        } else {
            s_cfg
                .captions
                .iter()
                .map(|c| embed(&s.model, &s.conditions, config, Some(c)))
                .collect::<Result<_, _>>()?
        };
        let chunk = s_cfg.frames.unwrap_or(s.model.config().f_max);
        let long = s
            .model
            .sample_long(&conds, &s.rig, chunk, s_cfg.overlap, s_cfg.guidance, blend.as_ref(), &mut s.rng)
            .map_err(|e| match e {
                rigmotion::denoiser::DenoiserError::OverlapTooLarge { .. } => CliError::Config(e.to_string()),
                e => CliError::Data(e.to_string()),
            })?;
        let path = config.output_dir()?.join("sample_long.bvh");
        let frames = long.motion.frames();
        write_doc(&path, &BvhDocument::from_motion(long.motion))?;
        say(out, format!("wrote {frames} frames in {} chunks to {}", conds.len(), path.display()))
    }
}
