use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::DenoiserError;
use crate::skeleton::{fk_frame, Rig};

/// What a condition embedding is computed from.
#[derive(Debug, Clone, Copy)]
pub enum ConditionInput<'a> {
    Text(&'a str),
    /// One pose of a rig, as ZXY degrees per joint.
    Pose { rig: &'a Rig, rotations: &'a [[f64; 3]] },
    /// A precomputed embedding, passed through after a length check.
    Vector(&'a [f64]),
}

/// Maps captions, poses or raw vectors to fixed-width condition vectors.
pub trait ConditionProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, input: ConditionInput<'_>) -> Result<Vec<f64>, DenoiserError>;
}

fn pass_through(dim: usize, v: &[f64]) -> Result<Vec<f64>, DenoiserError> {
    if v.len() != dim {
        return Err(DenoiserError::ShapeMismatch(format!("condition has {} values, expected {dim}", v.len())));
    }
    Ok(v.to_vec())
}

fn unsupported(provider: &str, what: &str) -> DenoiserError {
    DenoiserError::Config(format!("condition provider `{provider}` cannot embed {what}"))
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of lower-cased word unigrams and bigrams,
/// L2-normalized. Needs no trained model.
pub struct HashBagOfWords {
    pub dim: usize,
}

impl HashBagOfWords {
    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let words: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        let mut v = vec![0.0; self.dim];
        let mut add = |token: &str| {
            let h = fnv1a(token.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        };
        for w in &words {
            add(w);
        }
        for pair in words.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]));
        }
        normalize(v)
    }
}

impl ConditionProvider for HashBagOfWords {
    fn name(&self) -> &str {
        "hash_bow"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, input: ConditionInput<'_>) -> Result<Vec<f64>, DenoiserError> {
        match input {
            ConditionInput::Text(t) => Ok(self.embed_text(t)),
            ConditionInput::Vector(v) => pass_through(self.dim, v),
            ConditionInput::Pose { .. } => Err(unsupported(self.name(), "poses")),
        }
    }
}

/// Stand-in for an image embedding of a posed character: a fixed Gaussian
/// projection of root-relative joint positions, zero-padded to `j_max`
/// joints, scaled to unit RMS.
pub struct PoseProjection {
    dim: usize,
    j_max: usize,
    /// `dim × 3·j_max`, row-major.
    matrix: Vec<f64>,
}

impl PoseProjection {
    pub fn new(dim: usize, j_max: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrix = (0..dim * 3 * j_max).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self { dim, j_max, matrix }
    }

    pub fn embed_pose(&self, rig: &Rig, rotations: &[[f64; 3]]) -> Result<Vec<f64>, DenoiserError> {
        if rig.len() > self.j_max {
            return Err(DenoiserError::ShapeMismatch(format!("{} joints exceed j_max {}", rig.len(), self.j_max)));
        }
        if rotations.len() != rig.len() {
            return Err(DenoiserError::ShapeMismatch(format!(
                "{} rotations for {} joints",
                rotations.len(),
                rig.len()
            )));
        }
        let (positions, _) = fk_frame(rig, rotations);
        let root = positions[rig.topology().root()];
        let flat: Vec<f64> = positions.iter().flat_map(|p| (p - root).iter().copied().collect::<Vec<_>>()).collect();
        let width = 3 * self.j_max;
        let v: Vec<f64> = (0..self.dim)
            .map(|r| {
                let row = &self.matrix[r * width..r * width + flat.len()];
                row.iter().zip(&flat).map(|(a, b)| a * b).sum()
            })
            .collect();
        let scale = (self.dim as f64).sqrt();
        Ok(normalize(v).into_iter().map(|x| x * scale).collect())
    }
}

impl ConditionProvider for PoseProjection {
    fn name(&self) -> &str {
        "pose_projection"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, input: ConditionInput<'_>) -> Result<Vec<f64>, DenoiserError> {
        match input {
            ConditionInput::Pose { rig, rotations } => self.embed_pose(rig, rotations),
            ConditionInput::Vector(v) => pass_through(self.dim, v),
            ConditionInput::Text(_) => Err(unsupported(self.name(), "text")),
        }
    }
}

/// Builds a provider from `(dim, j_max, seed)`.
pub type ProviderFactory = fn(usize, usize, u64) -> Box<dyn ConditionProvider>;

/// Name → condition-provider table.
pub struct ConditionRegistry {
    factories: BTreeMap<String, ProviderFactory>,
}

impl ConditionRegistry {
    pub fn builtin() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("hash_bow", |dim, _, _| Box::new(HashBagOfWords { dim }));
        r.register("pose_projection", |dim, j_max, seed| Box::new(PoseProjection::new(dim, j_max, seed)));
        r
    }

    pub fn register(&mut self, name: &str, factory: ProviderFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, dim: usize, j_max: usize, seed: u64) -> Result<Box<dyn ConditionProvider>, DenoiserError> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| DenoiserError::Config(format!("unknown condition provider `{name}`")))?;
        Ok(f(dim, j_max, seed))
    }
}

impl Default for ConditionRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
