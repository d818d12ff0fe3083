use std::collections::BTreeMap;

use super::MetricError;
use crate::skeleton::{fk_frame, Motion};

/// Maps a motion window to a feature vector of fixed length.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Embedding of one frame of `motion`.
    fn embed_frame(&self, motion: &Motion, frame: usize) -> Result<Vec<f64>, MetricError>;

    /// Window embedding: mean of the frame embeddings.
    fn embed_window(&self, window: &Motion) -> Result<Vec<f64>, MetricError> {
        let mut acc = vec![0.0; self.dim()];
        for f in 0..window.frames() {
            for (a, v) in acc.iter_mut().zip(self.embed_frame(window, f)?) {
                *a += v;
            }
        }
        let n = window.frames() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

/// Flattened FK joint positions, zero-padded to `j_max` joints and scaled to
/// unit length per frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FkPositions {
    pub j_max: usize,
}

impl EmbeddingProvider for FkPositions {
    fn name(&self) -> &str {
        "fk_positions"
    }

    fn dim(&self) -> usize {
        3 * self.j_max
    }

    fn embed_frame(&self, motion: &Motion, frame: usize) -> Result<Vec<f64>, MetricError> {
        if motion.joints() > self.j_max {
            return Err(MetricError::TooManyJoints {
                joints: motion.joints(),
                max: self.j_max,
            });
        }
        let (pos, _) = fk_frame(motion.rig(), motion.frame(frame));
        let root = pos[motion.rig().topology().root()];
        let mut v = vec![0.0; self.dim()];
        for (j, p) in pos.iter().enumerate() {
            let d = p - root;
            v[3 * j..3 * j + 3].copy_from_slice(d.as_slice());
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

type ProviderFactory = fn(j_max: usize) -> Box<dyn EmbeddingProvider>;

/// Name → embedding provider table.
pub struct EmbeddingRegistry {
    factories: BTreeMap<String, ProviderFactory>,
}

impl EmbeddingRegistry {
    pub fn builtin() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("fk_positions", |j_max| Box::new(FkPositions { j_max }));
        r
    }

    pub fn register(&mut self, name: &str, factory: ProviderFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, j_max: usize) -> Result<Box<dyn EmbeddingProvider>, MetricError> {
        self.factories
            .get(name)
            .map(|f| f(j_max))
            .ok_or_else(|| MetricError::UnknownProvider(name.into()))
    }
}

impl Default for EmbeddingRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
