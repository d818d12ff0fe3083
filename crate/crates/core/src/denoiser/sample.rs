use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::ROTATION_DIM;
use super::model::{Denoiser, SampleInput};
use super::DenoiserError;
use crate::skeleton::rotation::wrap_degrees;
use crate::skeleton::{Motion, Rig};

/// Classifier-free guidance in clean-sample space:
/// `(1 − w)·uncond + w·cond`, i.e. `uncond + w·(cond − uncond)`.
/// `w = 1` returns `cond` and `w = 0` returns `uncond` exactly.
pub fn guided(uncond: &[f64], cond: &[f64], w: f64) -> Vec<f64> {
    uncond.iter().zip(cond).map(|(u, c)| (1.0 - w) * u + w * c).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct SampleRequest<'a> {
    pub rig: &'a Rig,
    pub frames: usize,
    pub cond: Option<&'a [f64]>,
    pub guidance: f64,
}

/// Weight of the newer chunk inside an overlap.
pub trait BlendCurve: Send + Sync {
    fn name(&self) -> &str;
    /// Weight at overlap index `i` of `n`; increasing in `i`, inside (0, 1).
    fn weight(&self, i: usize, n: usize) -> f64;
}

/// `u = (i + 1) / (n + 1)`.
pub struct LinearBlend;

impl BlendCurve for LinearBlend {
    fn name(&self) -> &str {
        "linear"
    }

    fn weight(&self, i: usize, n: usize) -> f64 {
        (i + 1) as f64 / (n + 1) as f64
    }
}

/// Raised-cosine ramp through the same sample points as [`LinearBlend`].
pub struct CosineBlend;

impl BlendCurve for CosineBlend {
    fn name(&self) -> &str {
        "cosine"
    }

    fn weight(&self, i: usize, n: usize) -> f64 {
        let u = (i + 1) as f64 / (n + 1) as f64;
        0.5 - 0.5 * (PI * u).cos()
    }
}

type BlendFactory = fn() -> Box<dyn BlendCurve>;

/// Name → blend-curve table.
pub struct BlendRegistry {
    factories: BTreeMap<String, BlendFactory>,
}

impl BlendRegistry {
    pub fn builtin() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("linear", || Box::new(LinearBlend));
        r.register("cosine", || Box::new(CosineBlend));
        r
    }

    pub fn register(&mut self, name: &str, factory: BlendFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn BlendCurve>, DenoiserError> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| DenoiserError::Config(format!("unknown blend curve `{name}`")))
    }
}

impl Default for BlendRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Output of [`Denoiser::sample_long`].
#[derive(Debug, Clone, PartialEq)]
pub struct LongSample {
    pub motion: Motion,
    /// Each chunk in degrees before blending and wrapping.
    pub chunks: Vec<Vec<[f64; 3]>>,
    /// First output frame of each chunk.
    pub starts: Vec<usize>,
    pub overlap: usize,
}

fn gaussian<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

impl Denoiser {
    /// Ancestral sampling of one motion (pose stage: `frames` independent poses).
    pub fn sample<R: Rng>(&self, req: &SampleRequest<'_>, rng: &mut R) -> Result<Motion, DenoiserError> {
        let x0 = self.sample_normalized(req, None, rng)?;
        let degrees = self.to_degrees(&x0)?;
        let wrapped = degrees.iter().map(|r| r.map(wrap_degrees)).collect();
        Ok(Motion::new(req.rig.clone(), wrapped, self.config.frame_time)?)
    }

    fn to_degrees(&self, x0: &[f64]) -> Result<Vec<[f64; 3]>, DenoiserError> {
        let norm = self.normalizer.as_ref().ok_or(DenoiserError::UntrainedModel)?;
        Ok(x0.chunks(ROTATION_DIM).map(|c| norm.denormalize([c[0], c[1], c[2]])).collect())
    }

    /// Clean normalized sample. `known` pins the leading frames by noised
    /// in-painting: at every step they are replaced with a fresh forward
    /// diffusion of the known values.
    fn sample_normalized<R: Rng>(&self, req: &SampleRequest<'_>, known: Option<&[f64]>, rng: &mut R) -> Result<Vec<f64>, DenoiserError> {
        if self.normalizer.is_none() {
            return Err(DenoiserError::UntrainedModel);
        }
        let size = req.frames * req.rig.len() * ROTATION_DIM;
        let mut x = gaussian(rng, size);
        let mut x0 = vec![0.0; size];
        for t in (0..self.schedule.steps()).rev() {
            if let Some(k) = known {
                let noised = self.schedule.q_sample(k, t, &gaussian(rng, k.len()));
                x[..k.len()].copy_from_slice(&noised);
            }
            let mut inputs = vec![SampleInput::new(req.rig, req.frames, &x, t, None)];
            if let Some(c) = req.cond {
                inputs.push(SampleInput::new(req.rig, req.frames, &x, t, Some(c)));
            }
            let fwd = self.forward(&inputs)?;
            x0 = match req.cond {
                Some(_) => guided(&fwd.sample_output(0), &fwd.sample_output(1), req.guidance),
                None => fwd.sample_output(0),
            };
            if t > 0 {
                let post = self.schedule.posterior(t);
                let sd = post.variance.sqrt();
                let z = gaussian(rng, size);
                for i in 0..size {
                    x[i] = post.coef_x0 * x0[i] + post.coef_xt * x[i] + sd * z[i];
                }
            }
        }
        Ok(x0)
    }

    /// Motion longer than one window: consecutive chunks of `chunk_frames`,
    /// each in-painted from the previous chunk's trailing `overlap` frames
    /// and cross-faded over that overlap with `blend`.
    pub fn sample_long<R: Rng>(
        &self,
        conds: &[Option<Vec<f64>>],
        rig: &Rig,
        chunk_frames: usize,
        overlap: usize,
        guidance: f64,
        blend: &dyn BlendCurve,
        rng: &mut R,
    ) -> Result<LongSample, DenoiserError> {
        if overlap >= chunk_frames || overlap >= self.config.f_max {
            return Err(DenoiserError::OverlapTooLarge {
                overlap,
                chunk: chunk_frames.min(self.config.f_max),
            });
        }
        if conds.is_empty() {
            return Err(DenoiserError::Config("no conditions for long sampling".into()));
        }
        let stride = rig.len() * ROTATION_DIM;
        let mut chunks = Vec::with_capacity(conds.len());
        let mut starts = Vec::with_capacity(conds.len());
        let mut out: Vec<[f64; 3]> = Vec::new();
        let mut tail: Option<Vec<f64>> = None;
        for cond in conds {
            let req = SampleRequest {
                rig,
                frames: chunk_frames,
                cond: cond.as_deref(),
                guidance,
            };
            let known = tail.as_deref().filter(|_| overlap > 0);
            let x0 = self.sample_normalized(&req, known, rng)?;
            let degrees = self.to_degrees(&x0)?;
            let rows = rig.len();
            let start = (out.len() / rows).saturating_sub(if tail.is_some() { overlap } else { 0 });
            for (k, r) in degrees.iter().enumerate() {
                let at = start * rows + k;
                if at < out.len() {
                    let u = blend.weight(k / rows, overlap);
                    let prev = out[at];
                    out[at] = [0, 1, 2].map(|c| (1.0 - u) * prev[c] + u * r[c]);
                } else {
                    out.push(*r);
                }
            }
            tail = Some(x0[(chunk_frames - overlap) * stride..].to_vec());
            starts.push(start);
            chunks.push(degrees);
        }
        let wrapped = out.iter().map(|r| r.map(wrap_degrees)).collect();
        Ok(LongSample {
            motion: Motion::new(rig.clone(), wrapped, self.config.frame_time)?,
            chunks,
            starts,
            overlap,
        })
    }
}
