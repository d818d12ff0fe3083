use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DenoiserConfig, Stage, ROTATION_DIM};
use super::schedule::{NoiseSchedule, ScheduleRegistry};
use super::DenoiserError;
use crate::encodings::{rig_feature_rows, sinusoid, tree_code_len};
use crate::nn::{glorot, Mat, ParamStore, Tape, Var};
use crate::skeleton::{Motion, Rig};

/// Per-channel statistics of rotations in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

const MIN_STD: f64 = 1e-3;

impl Normalizer {
    pub fn fit<'a>(motions: impl IntoIterator<Item = &'a Motion>) -> Result<Self, DenoiserError> {
        let mut n = 0.0;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for m in motions {
            for r in m.rotations() {
                for c in 0..3 {
                    let v = r[c].to_radians();
                    sum[c] += v;
                    sq[c] += v * v;
                }
                n += 1.0;
            }
        }
        if n == 0.0 {
            return Err(DenoiserError::Config("no rotations to fit normalization statistics".into()));
        }
        let mean = sum.map(|s| s / n);
        let mut std = [0.0; 3];
        for c in 0..3 {
            std[c] = (sq[c] / n - mean[c] * mean[c]).max(0.0).sqrt().max(MIN_STD);
        }
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, degrees: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = (degrees[c].to_radians() - self.mean[c]) / self.std[c];
        }
        out
    }

    /// Inverse of [`Normalizer::normalize`]; no angle wrapping.
    pub fn denormalize(&self, v: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = (v[c] * self.std[c] + self.mean[c]).to_degrees();
        }
        out
    }

    /// Flattened `frames × joints × 3` normalized values of a motion.
    pub fn normalize_motion(&self, m: &Motion) -> Vec<f64> {
        m.rotations().iter().flat_map(|&r| self.normalize(r)).collect()
    }
}

/// One sample fed to the denoiser. Values are normalized rotations laid out
/// frame-major: entry `(f·J + j)·3 + c`.
#[derive(Debug, Clone, Copy)]
pub struct SampleInput<'a> {
    pub rig: &'a Rig,
    pub frames: usize,
    pub x_t: &'a [f64],
    pub t: usize,
    /// `None` selects the learned null condition.
    pub cond: Option<&'a [f64]>,
    pub joint_mask: Option<&'a [bool]>,
    pub frame_mask: Option<&'a [bool]>,
}

impl<'a> SampleInput<'a> {
    pub fn new(rig: &'a Rig, frames: usize, x_t: &'a [f64], t: usize, cond: Option<&'a [f64]>) -> Self {
        Self {
            rig,
            frames,
            x_t,
            t,
            cond,
            joint_mask: None,
            frame_mask: None,
        }
    }
}

/// A recorded forward pass.
pub struct Forward {
    pub tape: Tape,
    /// `tokens × 3` prediction of the clean sample.
    pub output: Var,
    /// Token validity (joint and frame masks combined).
    pub valid: Arc<Vec<bool>>,
    /// First token of each sample.
    pub offsets: Vec<usize>,
}

impl Forward {
    /// Flattened prediction of sample `s`.
    pub fn sample_output(&self, s: usize) -> Vec<f64> {
        let out = self.tape.value(self.output);
        let end = self.offsets.get(s + 1).copied().unwrap_or(out.rows);
        out.data[self.offsets[s] * ROTATION_DIM..end * ROTATION_DIM].to_vec()
    }
}

/// Skeleton-aware diffusion transformer with factorized spatial and temporal
/// attention and adaLN-Zero conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub(super) config: DenoiserConfig,
    pub(super) stage: Stage,
    pub(super) params: ParamStore,
    pub(super) normalizer: Option<Normalizer>,
    pub(super) schedule: NoiseSchedule,
}

fn insert_block(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, cfg: &DenoiserConfig) {
    let d = cfg.d_model;
    store.insert_linear(rng, &format!("{prefix}.ada"), d, 6 * d, true);
    store.insert_linear(rng, &format!("{prefix}.attn.qkv"), d, 3 * d, false);
    store.insert_linear(rng, &format!("{prefix}.attn.out"), d, d, false);
    store.insert_linear(rng, &format!("{prefix}.mlp.fc1"), d, cfg.mlp_ratio * d, false);
    store.insert_linear(rng, &format!("{prefix}.mlp.fc2"), cfg.mlp_ratio * d, d, false);
}

impl Denoiser {
    /// Fresh pose-stage model. adaLN modulation layers start at zero, so
    /// every residual branch is initially inactive.
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self, DenoiserError> {
        config.validate()?;
        let schedule = ScheduleRegistry::builtin().build(&config.schedule, config.diffusion_steps)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let mut p = ParamStore::new();
        p.insert_linear(&mut rng, "input_proj", ROTATION_DIM, d, false);
        let tree_in = tree_code_len(config.tree_max_depth, config.tree_max_branch);
        p.insert_linear(&mut rng, "tree_mlp.fc1", tree_in, d, false);
        p.insert_linear(&mut rng, "tree_mlp.fc2", d, d, false);
        p.insert_linear(&mut rng, "rest_mlp.fc1", 6 * config.rest_bands, d, false);
        p.insert_linear(&mut rng, "rest_mlp.fc2", d, d, false);
        p.insert_linear(&mut rng, "cond_mlp.fc1", config.cond_dim, d, false);
        p.insert_linear(&mut rng, "cond_mlp.fc2", d, d, false);
        p.insert_linear(&mut rng, "time_mlp.fc1", d, d, false);
        p.insert_linear(&mut rng, "time_mlp.fc2", d, d, false);
        p.insert("null_cond", glorot(&mut rng, 1, config.cond_dim));
        for i in 0..config.depth {
            insert_block(&mut p, &mut rng, &format!("spatial.{i}"), &config);
        }
        p.insert_linear(&mut rng, "final.ada", d, 2 * d, true);
        p.insert_linear(&mut rng, "final.proj", d, ROTATION_DIM, false);
        Ok(Self {
            config,
            stage: Stage::PoseOnly,
            params: p,
            normalizer: None,
            schedule,
        })
    }

    /// Adds zero-gated temporal blocks after every spatial block and
    /// switches to the motion stage. The model's output is unchanged.
    pub fn enter_motion_stage(&mut self, seed: u64) {
        if self.stage == Stage::Motion {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..self.config.depth {
            insert_block(&mut self.params, &mut rng, &format!("temporal.{i}"), &self.config);
        }
        self.stage = Stage::Motion;
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.normalizer.as_ref()
    }

    pub fn set_normalizer(&mut self, n: Normalizer) {
        self.normalizer = Some(n);
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Whether `name` is updated when training `stage`.
    pub fn is_trainable(stage: Stage, name: &str) -> bool {
        match stage {
            Stage::PoseOnly => !name.starts_with("temporal."),
            Stage::Motion => name.starts_with("temporal."),
        }
    }

    pub fn forward(&self, inputs: &[SampleInput<'_>]) -> Result<Forward, DenoiserError> {
        self.forward_with(&self.params, inputs, self.stage)
    }

    /// Forward pass with explicit parameters and stage.
    pub fn forward_with(&self, params: &ParamStore, inputs: &[SampleInput<'_>], stage: Stage) -> Result<Forward, DenoiserError> {
        if stage == Stage::Motion && self.stage == Stage::PoseOnly {
            return Err(DenoiserError::StageMismatch {
                requested: stage,
                model: self.stage,
            });
        }
        let cfg = &self.config;
        let d = cfg.d_model;

        let mut x = Vec::new();
        let mut valid = Vec::new();
        let mut token_sample = Vec::new();
        let mut token_joint = Vec::new();
        let mut frame_pe = Vec::new();
        let mut tree_rows = Vec::new();
        let mut rest_rows = Vec::new();
        let mut offsets = Vec::with_capacity(inputs.len());
        let mut spatial_groups = Vec::new();
        let mut temporal_groups = Vec::new();
        let mut cond = Mat::zeros(inputs.len(), cfg.cond_dim);
        let mut null = vec![false; inputs.len()];
        let mut time = Vec::with_capacity(inputs.len());

        for (s, inp) in inputs.iter().enumerate() {
            let joints = inp.rig.len();
            let frames = inp.frames;
            check_input(cfg, inp)?;
            let base = valid.len();
            offsets.push(base);
            let joint_base = tree_rows.len();
            let (tree, rest) = rig_feature_rows(inp.rig, cfg.tree_max_depth, cfg.tree_max_branch, cfg.rest_bands)?;
            for j in 0..joints {
                tree_rows.push(tree.row(j).to_vec());
                rest_rows.push(rest.row(j).to_vec());
            }
            for f in 0..frames {
                let pe = match stage {
                    // every pose is its own one-frame sample
                    Stage::PoseOnly => sinusoid(0.0, d),
                    Stage::Motion => sinusoid(f as f64, d),
                };
                for j in 0..joints {
                    let ok = inp.joint_mask.is_none_or(|m| m[j]) && inp.frame_mask.is_none_or(|m| m[f]);
                    let at = (f * joints + j) * ROTATION_DIM;
                    if ok {
                        x.extend_from_slice(&inp.x_t[at..at + ROTATION_DIM]);
                    } else {
                        x.extend_from_slice(&[0.0; ROTATION_DIM]);
                    }
                    valid.push(ok);
                    token_sample.push(s);
                    token_joint.push(joint_base + j);
                    frame_pe.extend_from_slice(&pe);
                }
                spatial_groups.push((0..joints).map(|j| base + f * joints + j).collect::<Vec<_>>());
            }
            for j in 0..joints {
                temporal_groups.push((0..frames).map(|f| base + f * joints + j).collect::<Vec<_>>());
            }
            match inp.cond {
                Some(c) => cond.row_mut(s).copy_from_slice(c),
                None => null[s] = true,
            }
            time.extend(sinusoid(inp.t as f64, d));
        }
        let n = valid.len();
        let valid = Arc::new(valid);

        let mut tape = Tape::new();
        let xin = tape.input(Mat::from_vec(n, ROTATION_DIM, x));
        let mut h = tape.linear(params, "input_proj", xin);

        let tree_in = tape.input(Mat::from_rows(&tree_rows));
        let tree_pe = mlp(&mut tape, params, "tree_mlp", tree_in);
        let tree_pe = tape.gather(tree_pe, token_joint.clone());
        let rest_in = tape.input(Mat::from_rows(&rest_rows));
        let rest_pe = mlp(&mut tape, params, "rest_mlp", rest_in);
        let rest_pe = tape.gather(rest_pe, token_joint);
        let pe = tape.input(Mat::from_vec(n, d, frame_pe));
        h = tape.add(h, pe);
        h = tape.add(h, tree_pe);
        h = tape.add(h, rest_pe);
        h = tape.row_mask(h, valid.clone());

        let mut c = tape.input(cond);
        if null.iter().any(|&b| b) {
            let nc = tape.param(params, "null_cond");
            let nc = tape.gather(nc, vec![0; inputs.len()]);
            let nc = tape.row_mask(nc, Arc::new(null));
            c = tape.add(c, nc);
        }
        let c = mlp(&mut tape, params, "cond_mlp", c);
        let t_in = tape.input(Mat::from_vec(inputs.len(), d, time));
        let t = mlp(&mut tape, params, "time_mlp", t_in);
        let z = tape.add(c, t);
        let zs = tape.silu(z);

        let spatial_groups = Arc::new(spatial_groups);
        let temporal_groups = Arc::new(temporal_groups);
        let blocks = BlockCtx {
            params,
            zs,
            token_sample: &token_sample,
            valid: &valid,
            d,
            heads: cfg.heads,
        };
        for i in 0..cfg.depth {
            h = blocks.apply(&mut tape, &format!("spatial.{i}"), h, spatial_groups.clone());
            if stage == Stage::Motion {
                h = blocks.apply(&mut tape, &format!("temporal.{i}"), h, temporal_groups.clone());
            }
        }

        let ada = tape.linear(params, "final.ada", zs);
        let ada = tape.gather(ada, token_sample.clone());
        let shift = tape.columns(ada, 0, d);
        let scale = tape.columns(ada, d, d);
        let hn = tape.layer_norm(h);
        let hm = modulate(&mut tape, hn, shift, scale);
        let out = tape.linear(params, "final.proj", hm);
        let output = tape.row_mask(out, valid.clone());
        Ok(Forward {
            tape,
            output,
            valid,
            offsets,
        })
    }
}

fn check_input(cfg: &DenoiserConfig, inp: &SampleInput<'_>) -> Result<(), DenoiserError> {
    let joints = inp.rig.len();
    let bad = |m: String| Err(DenoiserError::ShapeMismatch(m));
    if joints > cfg.j_max {
        return bad(format!("{joints} joints exceed j_max {}", cfg.j_max));
    }
    if inp.frames == 0 || inp.frames > cfg.f_max {
        return bad(format!("{} frames outside 1..={}", inp.frames, cfg.f_max));
    }
    if inp.x_t.len() != inp.frames * joints * ROTATION_DIM {
        return bad(format!("x_t has {} values for {}x{}x3", inp.x_t.len(), inp.frames, joints));
    }
    if inp.t >= cfg.diffusion_steps {
        return bad(format!("timestep {} outside 0..{}", inp.t, cfg.diffusion_steps));
    }
    if inp.joint_mask.is_some_and(|m| m.len() != joints) || inp.frame_mask.is_some_and(|m| m.len() != inp.frames) {
        return bad("mask length mismatch".into());
    }
    if inp.cond.is_some_and(|c| c.len() != cfg.cond_dim) {
        return bad(format!("condition width differs from cond_dim {}", cfg.cond_dim));
    }
    Ok(())
}

fn mlp(tape: &mut Tape, params: &ParamStore, prefix: &str, x: Var) -> Var {
    let h = tape.linear(params, &format!("{prefix}.fc1"), x);
    let h = tape.silu(h);
    tape.linear(params, &format!("{prefix}.fc2"), h)
}

/// `x · (1 + scale) + shift`.
fn modulate(tape: &mut Tape, x: Var, shift: Var, scale: Var) -> Var {
    let s = tape.add_scalar(scale, 1.0);
    let y = tape.mul(x, s);
    tape.add(y, shift)
}

struct BlockCtx<'a> {
    params: &'a ParamStore,
    zs: Var,
    token_sample: &'a [usize],
    valid: &'a Arc<Vec<bool>>,
    d: usize,
    heads: usize,
}

impl BlockCtx<'_> {
    /// adaLN-Zero transformer block with attention inside `groups`.
    fn apply(&self, tape: &mut Tape, prefix: &str, x: Var, groups: Arc<Vec<Vec<usize>>>) -> Var {
        let (p, d) = (self.params, self.d);
        let ada = tape.linear(p, &format!("{prefix}.ada"), self.zs);
        let ada = tape.gather(ada, self.token_sample.to_vec());
        let part = |tape: &mut Tape, k: usize| tape.columns(ada, k * d, d);
        let (shift1, scale1, gate1) = (part(tape, 0), part(tape, 1), part(tape, 2));
        let (shift2, scale2, gate2) = (part(tape, 3), part(tape, 4), part(tape, 5));

        let h = tape.layer_norm(x);
        let h = modulate(tape, h, shift1, scale1);
        let qkv = tape.linear(p, &format!("{prefix}.attn.qkv"), h);
        let a = tape.attention(qkv, groups, self.valid.clone(), self.heads);
        let a = tape.linear(p, &format!("{prefix}.attn.out"), a);
        let a = tape.mul(gate1, a);
        let x = tape.add(x, a);

        let h = tape.layer_norm(x);
        let h = modulate(tape, h, shift2, scale2);
        let h = tape.linear(p, &format!("{prefix}.mlp.fc1"), h);
        let h = tape.silu(h);
        let h = tape.linear(p, &format!("{prefix}.mlp.fc2"), h);
        let h = tape.mul(gate2, h);
        let x = tape.add(x, h);
        tape.row_mask(x, self.valid.clone())
    }
}
