use std::collections::BTreeMap;
use std::fmt::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub grid_step: f64,
    /// `k` of R-Precision.
    pub top_k: usize,
    /// When set, generated motions are consecutive groups of this size, one
    /// group per reference, and multimodality is reported.
    pub samples_per_condition: Option<usize>,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            grid_step: DEFAULT_GRID_STEP,
            top_k: 1,
            samples_per_condition: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub provider: String,
    pub window: usize,
    pub grid_step: f64,
    /// `(theta, value)` per swept metric.
    pub curves: BTreeMap<String, Vec<(f64, f64)>>,
    pub auc: BTreeMap<String, f64>,
    pub scalars: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Long format: `metric,theta,value`; scalars and AUCs leave `theta` empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,theta,value\n");
        for (name, curve) in &self.curves {
            for (t, v) in curve {
                let _ = writeln!(out, "{name},{t},{v}");
            }
        }
        for (name, v) in &self.auc {
            let _ = writeln!(out, "{name}_auc,,{v}");
        }
        for (name, v) in &self.scalars {
            let _ = writeln!(out, "{name},,{v}");
        }
        out
    }
}

fn mean_row(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= rows.len() as f64);
    acc
}

/// Compares generated motions against references.
///
/// Windows of every motion on each side are pooled, with one window length
/// `min(shortest motion, MAX_WINDOW)` for all. FID uses the pooled window
/// embeddings; R-Precision and alignment pair motion `i` with motion `i`
/// using the mean window embedding of each.
pub fn evaluate(references: &[Motion], generated: &[Motion], provider: &dyn EmbeddingProvider, opts: &EvalOptions) -> Result<MetricReport, MetricError> {
    if references.is_empty() || generated.is_empty() {
        return Err(MetricError::EmptyWindows);
    }
    if !(opts.grid_step > 0.0 && opts.grid_step <= 1.0) {
        return Err(MetricError::InvalidArgument(format!("grid step {} outside (0, 1]", opts.grid_step)));
    }
    let window = references.iter().chain(generated).map(Motion::frames).min().unwrap_or(0).min(MAX_WINDOW);
    let embed = |set: &[Motion]| -> Result<Vec<Vec<Vec<f64>>>, MetricError> {
        set.iter().map(|m| window_embeddings(m, window, provider)).collect()
    };
    let ref_windows = embed(references)?;
    let gen_windows = embed(generated)?;
    let ref_pool: Vec<Vec<f64>> = ref_windows.iter().flatten().cloned().collect();
    let gen_pool: Vec<Vec<f64>> = gen_windows.iter().flatten().cloned().collect();

    let cov_best = best_similarities(&ref_pool, &gen_pool)?;
    let nov_best = best_similarities(&gen_pool, &ref_pool)?;
    let mut report = MetricReport {
        provider: provider.name().into(),
        window,
        grid_step: opts.grid_step,
        ..Default::default()
    };
    for (name, curve) in [
        ("coverage", sweep(|t| coverage_at(&cov_best, t), opts.grid_step)),
        ("novelty", sweep(|t| novelty_at(&nov_best, t), opts.grid_step)),
    ] {
        report.auc.insert(name.into(), trapezoid(&curve));
        report.curves.insert(name.into(), curve);
    }
    if ref_pool.len() >= 2 && gen_pool.len() >= 2 {
        report.scalars.insert("fid".into(), fid(&ref_pool, &gen_pool)?);
    }

    let ref_motion: Vec<Vec<f64>> = ref_windows.iter().map(|w| mean_row(w)).collect();
    let gen_motion: Vec<Vec<f64>> = gen_windows.iter().map(|w| mean_row(w)).collect();
    if ref_motion.len() == gen_motion.len() {
        report
            .scalars
            .insert(format!("r_precision@{}", opts.top_k), r_precision(&gen_motion, &ref_motion, opts.top_k)?);
        report.scalars.insert("alignment".into(), alignment(&gen_motion, &ref_motion)?);
    }
    if let Some(k) = opts.samples_per_condition {
        if k < 2 || gen_motion.len() != k * references.len() {
            return Err(MetricError::InvalidArgument(format!(
                "{} generated motions cannot be grouped {k} per reference for {} references",
                gen_motion.len(),
                references.len()
            )));
        }
        let groups: Vec<Vec<Vec<f64>>> = gen_motion.chunks(k).map(<[_]>::to_vec).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        report.scalars.insert("multimodality".into(), multimodality(&groups, &mut rng)?);
    }
    Ok(report)
}
