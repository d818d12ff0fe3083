//! Skeleton-aware positional encodings: sinusoidal frame encoding, tree-path
//! codes for a joint's position in the hierarchy, and multi-band sinusoidal
//! features of rest offsets. The latter two are lifted to model width by
//! small two-layer perceptrons.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use thiserror::Error;

use crate::nn::{silu, Mat, ParamStore};
use crate::skeleton::{Rig, SkeletonTopology};

pub const DEFAULT_TREE_DEPTH: usize = 24;
pub const DEFAULT_TREE_BRANCH: usize = 8;
pub const DEFAULT_REST_BANDS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("frame {index} is outside the encoding range 0..{max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("joint `{joint}` sits at depth {depth}, deeper than {max}")]
    DepthExceeded { joint: String, depth: usize, max: usize },
    #[error("joint `{joint}` is child {ordinal} of its parent, branch limit is {max}")]
    BranchExceeded { joint: String, ordinal: usize, max: usize },
}

/// Interleaved sin/cos encoding of frame `f`: entry `2i` is
/// `sin(f / 10000^(2i/d))`, entry `2i+1` the matching cosine.
pub fn frame_positional_encoding(f: usize, d_model: usize, f_max: usize) -> Result<Vec<f64>, EncodingError> {
    if f >= f_max {
        return Err(EncodingError::IndexOutOfRange { index: f, max: f_max });
    }
    Ok(sinusoid(f as f64, d_model))
}

/// Same layout as [`frame_positional_encoding`] for any real position; also
/// used for diffusion timesteps.
pub fn sinusoid(pos: f64, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for i in 0..d.div_ceil(2) {
        let w = pos / 10000f64.powf(2.0 * i as f64 / d as f64);
        out[2 * i] = w.sin();
        if 2 * i + 1 < d {
            out[2 * i + 1] = w.cos();
        }
    }
    out
}

/// Length of a tree-path code.
pub fn tree_code_len(max_depth: usize, max_branch: usize) -> usize {
    max_depth * max_branch
}

/// Concatenated one-hot blocks, one per level below the root, marking which
/// child was taken on the way from the root to `j`. Levels deeper than the
/// joint stay zero; the root is the all-zero code.
pub fn tree_path_code(
    topology: &SkeletonTopology,
    j: usize,
    max_depth: usize,
    max_branch: usize,
) -> Result<Vec<f64>, EncodingError> {
    let path = topology.path_from_root(j);
    let depth = path.len() - 1;
    if depth > max_depth {
        return Err(EncodingError::DepthExceeded {
            joint: topology.name(j).to_string(),
            depth,
            max: max_depth,
        });
    }
    let mut code = vec![0.0; tree_code_len(max_depth, max_branch)];
    for (level, step) in path.windows(2).enumerate() {
        let ordinal = topology.children(step[0]).iter().position(|&c| c == step[1]).expect("path follows tree edges");
        if ordinal >= max_branch {
            return Err(EncodingError::BranchExceeded {
                joint: topology.name(step[1]).to_string(),
                ordinal,
                max: max_branch,
            });
        }
        code[level * max_branch + ordinal] = 1.0;
    }
    Ok(code)
}

/// Per axis and band `k`: `sin(2^k π x)`, `cos(2^k π x)`. Length `6·bands`.
pub fn rest_features(offset: &Vector3<f64>, bands: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * bands);
    for axis in 0..3 {
        for k in 0..bands {
            let a = 2f64.powi(k as i32) * PI * offset[axis];
            out.push(a.sin());
            out.push(a.cos());
        }
    }
    out
}

/// Linear → SiLU → linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

impl Mlp {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize, output: usize) -> Self {
        let mut store = ParamStore::new();
        store.insert_linear(rng, "fc1", input, hidden, false);
        store.insert_linear(rng, "fc2", hidden, output, false);
        Self::from_store(&store, "").expect("just inserted")
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: Mat::zeros(input, hidden),
            b1: Mat::zeros(1, hidden),
            w2: Mat::zeros(hidden, output),
            b2: Mat::zeros(1, output),
        }
    }

    /// Reads `{prefix}fc1.{w,b}` and `{prefix}fc2.{w,b}`.
    pub fn from_store(store: &ParamStore, prefix: &str) -> Option<Self> {
        let get = |n: &str| store.get(&format!("{prefix}{n}")).cloned();
        Some(Self {
            w1: get("fc1.w")?,
            b1: get("fc1.b")?,
            w2: get("fc2.w")?,
            b2: get("fc2.b")?,
        })
    }

    /// Applies the perceptron to every row of `x`.
    pub fn forward(&self, x: &Mat) -> Mat {
        let h = x.matmul(&self.w1).add_row(&self.b1).map(silu);
        h.matmul(&self.w2).add_row(&self.b2)
    }

    pub fn forward_vec(&self, x: &[f64]) -> Vec<f64> {
        self.forward(&Mat::row_vector(x.to_vec())).data
    }
}

pub fn tree_pe(topology: &SkeletonTopology, j: usize, max_depth: usize, max_branch: usize, mlp: &Mlp) -> Result<Vec<f64>, EncodingError> {
    Ok(mlp.forward_vec(&tree_path_code(topology, j, max_depth, max_branch)?))
}

pub fn rest_pe(offset: &Vector3<f64>, bands: usize, mlp: &Mlp) -> Vec<f64> {
    mlp.forward_vec(&rest_features(offset, bands))
}

/// Tree-code and rest-feature rows for every joint of a rig.
pub fn rig_feature_rows(rig: &Rig, max_depth: usize, max_branch: usize, bands: usize) -> Result<(Mat, Mat), EncodingError> {
    let topo = rig.topology();
    let mut tree = Vec::with_capacity(rig.len());
    let mut rest = Vec::with_capacity(rig.len());
    for j in 0..rig.len() {
        tree.push(tree_path_code(topo, j, max_depth, max_branch)?);
        rest.push(rest_features(&rig.rest_offsets()[j], bands));
    }
    Ok((Mat::from_rows(&tree), Mat::from_rows(&rest)))
}

/// Precomputed encodings of one rig.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingTable {
    /// `f_max × d` frame encodings.
    pub frame_pe: Mat,
    /// `J × d` tree encodings.
    pub tree_pe: Mat,
    /// `J × d` rest-offset encodings.
    pub rest_pe: Mat,
}

/// Shape and MLP parameters needed to build [`EncodingTable`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub d_model: usize,
    pub f_max: usize,
    pub max_depth: usize,
    pub max_branch: usize,
    pub bands: usize,
    pub tree_mlp: Mlp,
    pub rest_mlp: Mlp,
}

impl Encoder {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d_model: usize, f_max: usize) -> Self {
        let (max_depth, max_branch, bands) = (DEFAULT_TREE_DEPTH, DEFAULT_TREE_BRANCH, DEFAULT_REST_BANDS);
        Self {
            d_model,
            f_max,
            max_depth,
            max_branch,
            bands,
            tree_mlp: Mlp::random(rng, tree_code_len(max_depth, max_branch), d_model, d_model),
            rest_mlp: Mlp::random(rng, 6 * bands, d_model, d_model),
        }
    }

    pub fn table(&self, rig: &Rig) -> Result<EncodingTable, EncodingError> {
        let (tree, rest) = rig_feature_rows(rig, self.max_depth, self.max_branch, self.bands)?;
        let frames: Vec<Vec<f64>> = (0..self.f_max).map(|f| sinusoid(f as f64, self.d_model)).collect();
        Ok(EncodingTable {
            frame_pe: Mat::from_rows(&frames),
            tree_pe: self.tree_mlp.forward(&tree),
            rest_pe: self.rest_mlp.forward(&rest),
        })
    }
}

impl EncodingTable {
    /// `z + PE(f) + TreePE(j) + RestPE(j)` for one token.
    pub fn token(&self, z: &[f64], f: usize, j: usize) -> Vec<f64> {
        z.iter()
            .zip(self.frame_pe.row(f))
            .zip(self.tree_pe.row(j))
            .zip(self.rest_pe.row(j))
            .map(|(((a, b), c), d)| a + b + c + d)
            .collect()
    }
}
