//! Window-based coverage and novelty with threshold sweeps, plus
//! distribution and retrieval metrics over motion embeddings.

mod embedding;
mod report;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::skeleton::Motion;

pub use embedding::{EmbeddingProvider, EmbeddingRegistry, FkPositions};
pub use report::{evaluate, EvalOptions, MetricReport};

/// Longest window compared by coverage and novelty.
pub const MAX_WINDOW: usize = 90;
pub const DEFAULT_GRID_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("window of {window} frames does not fit a motion of {frames}")]
    WindowTooLarge { window: usize, frames: usize },
    #[error("no windows to compare")]
    EmptyWindows,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("paired inputs differ in length: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("rig has {joints} joints, embedding supports {max}")]
    TooManyJoints { joints: usize, max: usize },
    #[error("unknown embedding provider `{0}`")]
    UnknownProvider(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// All stride-1 windows of one motion.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<Motion>,
    pub source_frames: usize,
    pub window: usize,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

pub fn extract_windows(motion: &Motion, window: usize) -> Result<WindowSet, MetricError> {
    if window == 0 || window > motion.frames() {
        return Err(MetricError::WindowTooLarge {
            window,
            frames: motion.frames(),
        });
    }
    let windows = (0..=motion.frames() - window).map(|s| motion.slice(s, window)).collect();
    Ok(WindowSet {
        windows,
        source_frames: motion.frames(),
        window,
    })
}

/// `min(L_a, L_b, MAX_WINDOW)`.
pub fn window_size(a: &Motion, b: &Motion) -> usize {
    a.frames().min(b.frames()).min(MAX_WINDOW)
}

/// Embeddings of every `window`-frame window of `motion`. Frame embeddings are
/// computed once and averaged with a running sum.
pub fn window_embeddings(motion: &Motion, window: usize, provider: &dyn EmbeddingProvider) -> Result<Vec<Vec<f64>>, MetricError> {
    if window == 0 || window > motion.frames() {
        return Err(MetricError::WindowTooLarge {
            window,
            frames: motion.frames(),
        });
    }
    let frames = (0..motion.frames())
        .map(|f| provider.embed_frame(motion, f))
        .collect::<Result<Vec<_>, _>>()?;
    let n = window as f64;
    let mut out = Vec::with_capacity(motion.frames() - window + 1);
    for s in 0..=motion.frames() - window {
        let mut acc = vec![0.0; provider.dim()];
        for fe in &frames[s..s + window] {
            for (a, v) in acc.iter_mut().zip(fe) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
        out.push(acc);
    }
    Ok(out)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// For each row of `from`, the best cosine similarity against any row of `to`.
pub fn best_similarities(from: &[Vec<f64>], to: &[Vec<f64>]) -> Result<Vec<f64>, MetricError> {
    if from.is_empty() || to.is_empty() {
        return Err(MetricError::EmptyWindows);
    }
    check_dims(from.iter().chain(to))?;
    Ok(from
        .iter()
        .map(|a| to.iter().map(|b| cosine(a, b)).fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

fn check_dims<'a>(mut rows: impl Iterator<Item = &'a Vec<f64>>) -> Result<usize, MetricError> {
    let Some(first) = rows.next() else {
        return Ok(0);
    };
    let d = first.len();
    for r in rows {
        if r.len() != d {
            return Err(MetricError::DimensionMismatch(d, r.len()));
        }
    }
    Ok(d)
}

/// Fraction of `best` entries above `theta`.
pub fn coverage_at(best: &[f64], theta: f64) -> f64 {
    best.iter().filter(|&&s| s > theta).count() as f64 / best.len() as f64
}

/// Fraction of `best` entries with `1 − s > theta`.
pub fn novelty_at(best: &[f64], theta: f64) -> f64 {
    best.iter().filter(|&&s| 1.0 - s > theta).count() as f64 / best.len() as f64
}

/// Fraction of reference windows matched by some generated window with
/// cosine similarity above `theta`.
pub fn coverage(reference: &Motion, generated: &Motion, theta: f64, provider: &dyn EmbeddingProvider) -> Result<f64, MetricError> {
    let w = window_size(reference, generated);
    let r = window_embeddings(reference, w, provider)?;
    let g = window_embeddings(generated, w, provider)?;
    Ok(coverage_at(&best_similarities(&r, &g)?, theta))
}

/// Fraction of generated windows whose closest reference window is still
/// dissimilar: `1 − max similarity > theta`.
pub fn novelty(generated: &Motion, reference: &Motion, theta: f64, provider: &dyn EmbeddingProvider) -> Result<f64, MetricError> {
    let w = window_size(reference, generated);
    let r = window_embeddings(reference, w, provider)?;
    let g = window_embeddings(generated, w, provider)?;
    Ok(novelty_at(&best_similarities(&g, &r)?, theta))
}

/// Uniform grid `0, step, …, 1` (the last point is always 1).
pub fn theta_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round().max(1.0) as usize;
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// `(theta, curve(theta))` on [`theta_grid`].
pub fn sweep(curve: impl Fn(f64) -> f64, step: f64) -> Vec<(f64, f64)> {
    theta_grid(step).into_iter().map(|t| (t, curve(t))).collect()
}

/// Trapezoidal area under sampled points.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|p| 0.5 * (p[1].0 - p[0].0) * (p[0].1 + p[1].1)).sum()
}

/// Area under `curve` over `[0, 1]`.
pub fn auc_sweep(curve: impl Fn(f64) -> f64, step: f64) -> f64 {
    trapezoid(&sweep(curve, step))
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, MetricError> {
    let d = check_dims(rows.iter())?;
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

/// Mean and unbiased covariance.
fn gaussian_fit(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1.0);
    (mean, cov)
}

/// Symmetric positive-semidefinite square root with negative eigenvalues
/// clamped to zero.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Fréchet distance between two Gaussians.
pub fn frechet_distance(mu1: &DVector<f64>, cov1: &DMatrix<f64>, mu2: &DVector<f64>, cov2: &DMatrix<f64>) -> f64 {
    let s1 = psd_sqrt(cov1);
    let inner = &s1 * cov2 * &s1;
    let sym = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = sym.symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let diff = mu1 - mu2;
    (diff.dot(&diff) + cov1.trace() + cov2.trace() - 2.0 * tr_sqrt).max(0.0)
}

/// Fréchet distance between Gaussian fits of two embedding sets.
///
/// `tr((Σ₁Σ₂)^½)` is evaluated as `tr((Σ₁^½ Σ₂ Σ₁^½)^½)`, which has the same
/// eigenvalues and stays symmetric.
pub fn fid(real: &[Vec<f64>], generated: &[Vec<f64>]) -> Result<f64, MetricError> {
    for set in [real, generated] {
        if set.len() < 2 {
            return Err(MetricError::TooFewSamples { needed: 2, got: set.len() });
        }
    }
    let (a, b) = (to_matrix(real)?, to_matrix(generated)?);
    if a.ncols() != b.ncols() {
        return Err(MetricError::DimensionMismatch(a.ncols(), b.ncols()));
    }
    let (mu1, cov1) = gaussian_fit(&a);
    let (mu2, cov2) = gaussian_fit(&b);
    Ok(frechet_distance(&mu1, &cov1, &mu2, &cov2))
}

/// Fraction of queries whose paired target ranks in the top `k` by cosine
/// similarity. Ties with a lower-indexed target count against the query.
pub fn r_precision(queries: &[Vec<f64>], targets: &[Vec<f64>], k: usize) -> Result<f64, MetricError> {
    if queries.len() != targets.len() {
        return Err(MetricError::SizeMismatch(queries.len(), targets.len()));
    }
    if queries.is_empty() {
        return Err(MetricError::TooFewSamples { needed: 1, got: 0 });
    }
    check_dims(queries.iter().chain(targets))?;
    let hits = queries
        .iter()
        .enumerate()
        .filter(|(i, q)| {
            let own = cosine(q, &targets[*i]);
            let ahead = targets
                .iter()
                .enumerate()
                .filter(|(j, t)| {
                    let s = cosine(q, t);
                    *j != *i && (s > own || (s == own && j < i))
                })
                .count();
            ahead < k
        })
        .count();
    Ok(hits as f64 / queries.len() as f64)
}

/// Mean cosine similarity of matched pairs.
pub fn alignment(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::TooFewSamples { needed: 1, got: 0 });
    }
    check_dims(a.iter().chain(b))?;
    Ok(a.iter().zip(b).map(|(x, y)| cosine(x, y)).sum::<f64>() / a.len() as f64)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean distance within each condition group, averaged over groups. Each
/// group is shuffled once and split into disjoint consecutive pairs; an odd
/// leftover sample is unused.
pub fn multimodality<R: Rng + ?Sized>(groups: &[Vec<Vec<f64>>], rng: &mut R) -> Result<f64, MetricError> {
    if groups.is_empty() {
        return Err(MetricError::TooFewSamples { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    for g in groups {
        if g.len() < 2 {
            return Err(MetricError::TooFewSamples { needed: 2, got: g.len() });
        }
        check_dims(g.iter())?;
        let mut idx: Vec<usize> = (0..g.len()).collect();
        idx.shuffle(rng);
        let pairs: Vec<f64> = idx.chunks_exact(2).map(|p| euclidean(&g[p[0]], &g[p[1]])).collect();
        total += pairs.iter().sum::<f64>() / pairs.len() as f64;
    }
    Ok(total / groups.len() as f64)
}
