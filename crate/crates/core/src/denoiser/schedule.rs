use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use super::DenoiserError;

/// Produces the cumulative signal fractions `ᾱ_t` for `t = 0..steps`.
pub trait ScheduleKind: Send + Sync {
    fn name(&self) -> &str;
    fn alphas_cumprod(&self, steps: usize) -> Vec<f64>;
}

/// `ᾱ_t = f(t) / f(0)` with `f(t) = cos²(((t/T) + s) / (1 + s) · π/2)`.
pub struct CosineSchedule {
    pub offset: f64,
}

impl ScheduleKind for CosineSchedule {
    fn name(&self) -> &str {
        "cosine"
    }

    fn alphas_cumprod(&self, steps: usize) -> Vec<f64> {
        let s = self.offset;
        let f = |t: f64| (((t / steps as f64) + s) / (1.0 + s) * FRAC_PI_2).cos().powi(2);
        let f0 = f(0.0);
        let mut out: Vec<f64> = (0..steps).map(|t| f(t as f64) / f0).collect();
        // keep per-step betas at or below 0.999
        for t in 1..steps {
            out[t] = out[t].max(out[t - 1] * 1e-3);
        }
        out
    }
}

/// Betas rising linearly from 1e-4 to 0.02, rescaled to the step count.
pub struct LinearSchedule;

impl ScheduleKind for LinearSchedule {
    fn name(&self) -> &str {
        "linear"
    }

    fn alphas_cumprod(&self, steps: usize) -> Vec<f64> {
        let scale = 1000.0 / steps as f64;
        let (lo, hi) = (1e-4 * scale, (0.02 * scale).min(0.999));
        let mut acc = 1.0;
        (0..steps)
            .map(|t| {
                let beta = lo + (hi - lo) * t as f64 / (steps - 1).max(1) as f64;
                acc *= 1.0 - beta;
                acc
            })
            .collect()
    }
}

type ScheduleFactory = fn() -> Box<dyn ScheduleKind>;

/// Name → noise-schedule table.
pub struct ScheduleRegistry {
    factories: BTreeMap<String, ScheduleFactory>,
}

impl ScheduleRegistry {
    pub fn builtin() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("cosine", || Box::new(CosineSchedule { offset: 0.008 }));
        r.register("linear", || Box::new(LinearSchedule));
        r
    }

    pub fn register(&mut self, name: &str, factory: ScheduleFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, steps: usize) -> Result<NoiseSchedule, DenoiserError> {
        let kind = self
            .factories
            .get(name)
            .ok_or_else(|| DenoiserError::Config(format!("unknown noise schedule `{name}`")))?();
        NoiseSchedule::from_alphas_cumprod(kind.alphas_cumprod(steps))
    }
}

impl Default for ScheduleRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alphas_cumprod: Vec<f64>,
}

/// Coefficients of `q(x_{t-1} | x_t, x̂_0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub coef_x0: f64,
    pub coef_xt: f64,
    pub variance: f64,
}

impl NoiseSchedule {
    pub fn from_alphas_cumprod(alphas_cumprod: Vec<f64>) -> Result<Self, DenoiserError> {
        if alphas_cumprod.is_empty() {
            return Err(DenoiserError::Config("empty noise schedule".into()));
        }
        let ok = alphas_cumprod.iter().all(|&a| a > 0.0 && a <= 1.0) && alphas_cumprod.windows(2).all(|w| w[1] <= w[0]);
        if !ok {
            return Err(DenoiserError::Config("ᾱ must lie in (0, 1] and be non-increasing".into()));
        }
        Ok(Self { alphas_cumprod })
    }

    pub fn steps(&self) -> usize {
        self.alphas_cumprod.len()
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alphas_cumprod[t]
    }

    pub fn alphas_cumprod(&self) -> &[f64] {
        &self.alphas_cumprod
    }

    /// `x_t = √ᾱ_t x_0 + √(1−ᾱ_t) ε`.
    pub fn q_sample(&self, x0: &[f64], t: usize, noise: &[f64]) -> Vec<f64> {
        assert_eq!(x0.len(), noise.len());
        let a = self.alpha_bar(t);
        let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
        x0.iter().zip(noise).map(|(x, e)| sa * x + sn * e).collect()
    }

    /// Posterior mean coefficients and variance for stepping from `t > 0`.
    pub fn posterior(&self, t: usize) -> Posterior {
        assert!(t > 0);
        let ab = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t - 1);
        let alpha = ab / ab_prev;
        let beta = 1.0 - alpha;
        let denom = 1.0 - ab;
        if denom <= 0.0 {
            return Posterior {
                coef_x0: 1.0,
                coef_xt: 0.0,
                variance: 0.0,
            };
        }
        Posterior {
            coef_x0: ab_prev.sqrt() * beta / denom,
            coef_xt: alpha.sqrt() * (1.0 - ab_prev) / denom,
            variance: (beta * (1.0 - ab_prev) / denom).max(0.0),
        }
    }
}
