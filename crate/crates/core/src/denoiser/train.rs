use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{Stage, TrainConfig};
use super::model::{Denoiser, Normalizer, SampleInput};
use super::DenoiserError;
use crate::nn::{Adam, Mat, ParamStore};
use crate::skeleton::Motion;

/// A training motion with its conditioning vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub motion: Motion,
    /// Per-frame condition used by the pose stage (empty for none).
    pub pose_conds: Vec<Vec<f64>>,
    /// Whole-motion condition used by the motion stage.
    pub motion_cond: Option<Vec<f64>>,
}

impl TrainingExample {
    pub fn unconditional(motion: Motion) -> Self {
        Self {
            motion,
            pose_conds: Vec::new(),
            motion_cond: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Loss of every step.
    pub losses: Vec<f64>,
    /// Samples that used the null condition.
    pub null_condition_samples: usize,
    pub samples: usize,
}

impl TrainReport {
    /// Trailing moving average with window `w`.
    pub fn smoothed(&self, w: usize) -> Vec<f64> {
        smooth(&self.losses, w)
    }
}

pub fn smooth(values: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        acc += values[i];
        if i >= w {
            acc -= values[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

struct Draw {
    example: usize,
    frames: usize,
    x0: Vec<f64>,
    x_t: Vec<f64>,
    t: usize,
    cond: Option<Vec<f64>>,
}

fn noise<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

impl Denoiser {
    /// Runs `config.steps` optimizer steps of `stage` on `examples`.
    ///
    /// Fits normalization statistics first if none exist. Training the motion
    /// stage on a pose-stage model adds the temporal blocks; training the
    /// pose stage on a motion-stage model is refused because it would alter
    /// frozen weights.
    pub fn train(&mut self, examples: &[TrainingExample], stage: Stage, config: &TrainConfig) -> Result<TrainReport, DenoiserError> {
        if examples.is_empty() {
            return Err(DenoiserError::Config("no training examples".into()));
        }
        if stage == Stage::PoseOnly && self.stage == Stage::Motion {
            return Err(DenoiserError::StageMismatch {
                requested: stage,
                model: self.stage,
            });
        }
        if stage == Stage::Motion {
            self.enter_motion_stage(config.seed ^ 0x7E3A_0001);
        }
        if self.normalizer.is_none() {
            self.normalizer = Some(Normalizer::fit(examples.iter().map(|e| &e.motion))?);
        }
        let frozen = frozen_snapshot(&self.params, stage);
        let mut adam = Adam::new(config.optimizer);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut report = TrainReport::default();
        for _ in 0..config.steps {
            let loss = self.training_step(examples, stage, config.batch_size, &mut adam, &mut rng, &mut report)?;
            report.losses.push(loss);
            check_frozen(&self.params, &frozen)?;
        }
        Ok(report)
    }

    /// One optimizer step on a random batch; returns the batch loss.
    pub fn training_step<R: Rng>(
        &mut self,
        examples: &[TrainingExample],
        stage: Stage,
        batch_size: usize,
        adam: &mut Adam,
        rng: &mut R,
        report: &mut TrainReport,
    ) -> Result<f64, DenoiserError> {
        let norm = self.normalizer.clone().ok_or(DenoiserError::UntrainedModel)?;
        let steps = self.config.diffusion_steps;
        let f_max = self.config.f_max;
        let mut draws = Vec::with_capacity(batch_size);
        for _ in 0..batch_size.max(1) {
            let example = rng.random_range(0..examples.len());
            let ex = &examples[example];
            let total = ex.motion.frames();
            let (start, frames) = match stage {
                Stage::PoseOnly => (rng.random_range(0..total), 1),
                Stage::Motion => {
                    let len = total.min(f_max);
                    (rng.random_range(0..=total - len), len)
                }
            };
            let window = ex.motion.slice(start, frames);
            let x0 = norm.normalize_motion(&window);
            let t = rng.random_range(0..steps);
            let eps = noise(rng, x0.len());
            let x_t = self.schedule.q_sample(&x0, t, &eps);
            let dropped = rng.random::<f64>() < self.config.cfg_dropout;
            let cond = match stage {
                Stage::PoseOnly => ex.pose_conds.get(start).cloned().or_else(|| ex.motion_cond.clone()),
                Stage::Motion => ex.motion_cond.clone(),
            }
            .filter(|_| !dropped);
            report.samples += 1;
            if cond.is_none() {
                report.null_condition_samples += 1;
            }
            draws.push(Draw {
                example,
                frames,
                x0,
                x_t,
                t,
                cond,
            });
        }
        let inputs: Vec<SampleInput<'_>> = draws
            .iter()
            .map(|d| SampleInput::new(examples[d.example].motion.rig(), d.frames, &d.x_t, d.t, d.cond.as_deref()))
            .collect();
        let fwd = self.forward_with(&self.params, &inputs, stage)?;
        let target: Vec<f64> = draws.iter().flat_map(|d| d.x0.iter().copied()).collect();
        let rows = target.len() / 3;
        let mut tape = fwd.tape;
        let loss = tape.masked_mse(fwd.output, Mat::from_vec(rows, 3, target), fwd.valid.clone());
        let value = tape.value(loss).data[0];
        let grads = tape.backward(loss);
        adam.update(&mut self.params, &grads, |name| Denoiser::is_trainable(stage, name));
        Ok(value)
    }
}

fn frozen_snapshot(params: &ParamStore, stage: Stage) -> Vec<(String, Mat)> {
    params
        .iter()
        .filter(|(n, _)| !Denoiser::is_trainable(stage, n))
        .map(|(n, m)| (n.to_string(), m.clone()))
        .collect()
}

fn check_frozen(params: &ParamStore, frozen: &[(String, Mat)]) -> Result<(), DenoiserError> {
    for (name, value) in frozen {
        if params.get(name) != Some(value) {
            return Err(DenoiserError::FrozenWeightViolation(name.clone()));
        }
    }
    Ok(())
}
