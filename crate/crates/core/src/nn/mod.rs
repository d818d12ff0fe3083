//! Small dense-tensor toolkit: row-major matrices, a named parameter store,
//! a reverse-mode autodiff tape and Adam.
//!
//! Kernels are plain loops with a fixed summation order so that results are
//! bit-identical across runs and independent of how rows are grouped.

mod adam;
mod tape;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use tape::{Gradients, Tape, Var};

/// Row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "{rows}x{cols} matrix needs {} values", rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self::from_vec(1, data.len(), data)
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul {:?} x {:?}", self.shape(), other.shape());
        let mut out = Mat::zeros(self.rows, other.cols);
        let m = other.cols;
        for i in 0..self.rows {
            let o = &mut out.data[i * m..(i + 1) * m];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b = &other.data[k * m..(k + 1) * m];
                for (x, &y) in o.iter_mut().zip(b) {
                    *x += a * y;
                }
            }
        }
        out
    }

    /// Adds `bias` (1 × cols) to every row.
    pub fn add_row(&self, bias: &Mat) -> Mat {
        assert_eq!((1, self.cols), bias.shape());
        let mut out = self.clone();
        for r in 0..self.rows {
            for (x, b) in out.row_mut(r).iter_mut().zip(&bias.data) {
                *x += b;
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat::from_vec(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        assert_eq!(self.shape(), other.shape());
        Mat::from_vec(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Per-row normalization to zero mean and unit variance, no affine terms.
/// Returns the normalized rows and each row's reciprocal std.
pub fn layer_norm(x: &Mat) -> (Mat, Vec<f64>) {
    let mut out = Mat::zeros(x.rows, x.cols);
    let mut rstd = Vec::with_capacity(x.rows);
    let n = x.cols as f64;
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (o, v) in out.row_mut(r).iter_mut().zip(row) {
            *o = (v - mean) * s;
        }
        rstd.push(s);
    }
    (out, rstd)
}

/// Glorot-uniform weights for a `fan_in × fan_out` layer.
pub fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Mat {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Mat::from_vec(
        fan_in,
        fan_out,
        (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect(),
    )
}

/// Named parameters, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamStore {
    params: BTreeMap<String, Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Mat) {
        self.params.insert(name.into(), value);
    }

    /// Adds `{prefix}.w` (Glorot or zero) and a zero `{prefix}.b`.
    pub fn insert_linear<R: Rng + ?Sized>(&mut self, rng: &mut R, prefix: &str, fan_in: usize, fan_out: usize, zero: bool) {
        let w = if zero {
            Mat::zeros(fan_in, fan_out)
        } else {
            glorot(rng, fan_in, fan_out)
        };
        self.insert(format!("{prefix}.w"), w);
        self.insert(format!("{prefix}.b"), Mat::zeros(1, fan_out));
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Mat)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|m| m.data.len()).sum()
    }
}
