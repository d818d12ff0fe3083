//! Command-line front end: ingestion, augmentation, training, sampling and
//! evaluation driven by a serializable [`RunConfig`].

pub mod commands;
pub mod config;
pub mod error;
pub mod logging;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rigmotion::bvh::SignedAxis;
use rigmotion::denoiser::Stage;
use serde::de::DeserializeOwned;

pub use commands::{Command, CommandRegistry};
pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "rigmotion", version, about = "Motion synthesis for arbitrary skeletal rigs")]
pub struct Cli {
    /// Run config (TOML, or JSON by extension); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Plain warnings and errors instead of JSON log lines.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Falls back to the config file, then RIGMOTION_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub max_joints: Option<usize>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Parse and check every BVH of a manifest.
    Validate {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Normalize scale, position and facing of a manifest's motions.
    Preprocess {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        forward: Option<SignedAxis>,
        #[arg(long, allow_hyphen_values = true)]
        up: Option<SignedAxis>,
    },
    /// Expand a manifest with augmented rig variants.
    Augment {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        variants: Option<usize>,
        /// Augmentation policy file (TOML or JSON).
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Train one stage of the denoiser.
    Train(TrainArgs),
    /// Sample one motion from a checkpoint.
    Sample(SampleArgs),
    /// Sample a motion longer than the model window.
    SampleLong(SampleArgs),
    /// Compare generated motions with references.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// pose_only or motion.
    #[arg(long, value_parser = parse_stage)]
    pub stage: Option<Stage>,
    /// Pose-stage checkpoint to continue from; required for the motion stage.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// Denoiser config file; replaces the preset.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// BVH file whose rig is animated.
    #[arg(long)]
    pub rig: Option<PathBuf>,
    /// Frames per sample or per chunk.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Repeat for one caption per chunk.
    #[arg(long = "caption")]
    pub captions: Vec<String>,
    /// BVH file holding the pose condition.
    #[arg(long)]
    pub pose: Option<PathBuf>,
    #[arg(long)]
    pub pose_frame: Option<usize>,
    #[arg(long)]
    pub guidance: Option<f64>,
    #[arg(long)]
    pub chunks: Option<usize>,
    #[arg(long)]
    pub overlap: Option<usize>,
    #[arg(long)]
    pub blend: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Manifest or directory of reference BVH files.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub generated: Option<PathBuf>,
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub samples_per_condition: Option<usize>,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    match s.replace('-', "_").as_str() {
        "pose_only" | "pose" => Ok(Stage::PoseOnly),
        "motion" => Ok(Stage::Motion),
        _ => Err(format!("unknown stage `{s}` (pose_only or motion)")),
    }
}

/// Reads a TOML or JSON file into `T`.
pub fn load_file<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Cmd {
    pub fn name(&self) -> &'static str {
        match self {
            Cmd::Validate { .. } => "validate",
            Cmd::Preprocess { .. } => "preprocess",
            Cmd::Augment { .. } => "augment",
            Cmd::Train(_) => "train",
            Cmd::Sample(_) => "sample",
            Cmd::SampleLong(_) => "sample-long",
            Cmd::Eval(_) => "eval",
        }
    }

    fn apply(&self, c: &mut RunConfig) -> Result<(), CliError> {
        match self {
            Cmd::Validate { manifest } => set(&mut c.manifest, manifest.clone().map(Some)),
            Cmd::Preprocess { manifest, forward, up } => {
                set(&mut c.manifest, manifest.clone().map(Some));
                set(&mut c.preprocess.forward, *forward);
                set(&mut c.preprocess.up, *up);
            }
            Cmd::Augment { manifest, variants, policy } => {
                set(&mut c.manifest, manifest.clone().map(Some));
                set(&mut c.augment.variants, *variants);
                if let Some(p) = policy {
                    c.augment.policy = load_file(p)?;
                }
            }
            Cmd::Train(a) => {
                set(&mut c.manifest, a.manifest.clone().map(Some));
                set(&mut c.train.stage, a.stage);
                set(&mut c.checkpoint, a.checkpoint.clone().map(Some));
                set(&mut c.model.preset, a.preset.clone());
                if let Some(p) = &a.model_config {
                    c.model.config = Some(load_file(p)?);
                }
                set(&mut c.train.steps, a.steps);
                set(&mut c.train.batch_size, a.batch_size);
                set(&mut c.train.optimizer.lr, a.lr);
            }
            Cmd::Sample(a) | Cmd::SampleLong(a) => {
                let s = &mut c.sample;
                set(&mut c.checkpoint, a.checkpoint.clone().map(Some));
                set(&mut s.rig, a.rig.clone().map(Some));
                set(&mut s.frames, a.frames.map(Some));
                if !a.captions.is_empty() {
                    s.captions = a.captions.clone();
                }
                set(&mut s.pose, a.pose.clone().map(Some));
                set(&mut s.pose_frame, a.pose_frame);
                set(&mut s.guidance, a.guidance);
                set(&mut s.chunks, a.chunks.map(Some));
                set(&mut s.overlap, a.overlap);
                set(&mut s.blend, a.blend.clone());
            }
            Cmd::Eval(a) => {
                let e = &mut c.eval;
                set(&mut e.reference, a.reference.clone().map(Some));
                set(&mut e.generated, a.generated.clone().map(Some));
                set(&mut e.provider, a.provider.clone());
                set(&mut e.options.grid_step, a.grid_step);
                set(&mut e.options.top_k, a.top_k);
                set(&mut e.options.samples_per_condition, a.samples_per_condition.map(Some));
            }
        }
        Ok(())
    }
}

impl Cli {
    /// Config file, then flags, then the seed fallback chain.
    pub fn resolve(&self, seed_env: Option<&str>) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        set(&mut c.seed, self.seed.map(Some));
        set(&mut c.output, self.output.clone().map(Some));
        set(&mut c.max_joints, self.max_joints);
        self.command.apply(&mut c)?;
        c.resolve_seed(seed_env)?;
        Ok(c)
    }

    /// Runs the selected command and returns the process exit code.
    pub fn execute(&self, out: &mut dyn Write) -> i32 {
        let env = std::env::var(config::SEED_ENV).ok();
        let result = self
            .resolve(env.as_deref())
            .and_then(|c| CommandRegistry::builtin().run(self.command.name(), &c, out));
        match result {
            Ok(()) => 0,
            Err(e) => {
                log::error!("{e}");
                e.exit_code()
            }
        }
    }
}
