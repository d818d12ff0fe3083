use std::collections::BTreeMap;
use std::sync::Arc;

use super::{layer_norm, sigmoid, silu, Mat, ParamStore};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param(String),
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    AddScalar(usize),
    Silu(usize),
    LayerNorm { x: usize, rstd: Vec<f64> },
    Gather { x: usize, index: Vec<usize> },
    Columns { x: usize, start: usize },
    RowMask { x: usize, keep: Arc<Vec<bool>> },
    Attention(Box<AttentionCache>),
    MaskedMse { pred: usize, target: Mat, keep: Arc<Vec<bool>>, count: f64 },
}

struct AttentionCache {
    qkv: usize,
    groups: Arc<Vec<Vec<usize>>>,
    valid: Arc<Vec<bool>>,
    heads: usize,
    /// Softmax weights per (group, head), `n × n` row-major.
    probs: Vec<Vec<f64>>,
}

struct Node {
    value: Mat,
    op: Op,
}

/// Records a forward computation for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
}

/// Gradients of a scalar with respect to every recorded parameter.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub params: BTreeMap<String, Mat>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, value: Mat) -> Var {
        self.push(value, Op::Input)
    }

    /// Parameter `name`, recorded once per tape.
    ///
    /// Panics if the store has no such parameter.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let value = store
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter `{name}`"))
            .clone();
        let v = self.push(value, Op::Param(name.to_string()));
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a.0, b.0))
    }

    /// `x + bias` with a `1 × cols` bias broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let value = self.value(x).add_row(self.value(bias));
        self.push(value, Op::AddBias(x.0, bias.0))
    }

    /// `x · W + b` with parameters `{prefix}.w` and `{prefix}.b`.
    pub fn linear(&mut self, store: &ParamStore, prefix: &str, x: Var) -> Var {
        let w = self.param(store, &format!("{prefix}.w"));
        let b = self.param(store, &format!("{prefix}.b"));
        let xw = self.matmul(x, w);
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(value, Op::Mul(a.0, b.0))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.push(value, Op::AddScalar(x.0))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(silu);
        self.push(value, Op::Silu(x.0))
    }

    pub fn layer_norm(&mut self, x: Var) -> Var {
        let (value, rstd) = layer_norm(self.value(x));
        self.push(value, Op::LayerNorm { x: x.0, rstd })
    }

    /// Output row `i` is input row `index[i]`.
    pub fn gather(&mut self, x: Var, index: Vec<usize>) -> Var {
        let src = self.value(x);
        let mut value = Mat::zeros(index.len(), src.cols);
        for (i, &r) in index.iter().enumerate() {
            value.row_mut(i).copy_from_slice(src.row(r));
        }
        self.push(value, Op::Gather { x: x.0, index })
    }

    pub fn columns(&mut self, x: Var, start: usize, len: usize) -> Var {
        let src = self.value(x);
        assert!(start + len <= src.cols);
        let mut value = Mat::zeros(src.rows, len);
        for r in 0..src.rows {
            value.row_mut(r).copy_from_slice(&src.row(r)[start..start + len]);
        }
        self.push(value, Op::Columns { x: x.0, start })
    }

    /// Zeroes rows where `keep` is false.
    pub fn row_mask(&mut self, x: Var, keep: Arc<Vec<bool>>) -> Var {
        let mut value = self.value(x).clone();
        assert_eq!(keep.len(), value.rows);
        for (r, &k) in keep.iter().enumerate() {
            if !k {
                value.row_mut(r).fill(0.0);
            }
        }
        self.push(value, Op::RowMask { x: x.0, keep })
    }

    /// Multi-head self-attention inside each row group.
    ///
    /// `qkv` holds `[Q | K | V]` column blocks of width `d` each. Rows with
    /// `valid == false` are never attended to and produce zero output; their
    /// contents never reach another row.
    pub fn attention(&mut self, qkv: Var, groups: Arc<Vec<Vec<usize>>>, valid: Arc<Vec<bool>>, heads: usize) -> Var {
        let src = self.value(qkv);
        let d = src.cols / 3;
        assert_eq!(d * 3, src.cols);
        assert_eq!(d % heads, 0);
        assert_eq!(valid.len(), src.rows);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Mat::zeros(src.rows, d);
        let mut probs = Vec::with_capacity(groups.len() * heads);
        for rows in groups.iter() {
            let n = rows.len();
            for h in 0..heads {
                let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
                let mut p = vec![0.0; n * n];
                for (a, &ra) in rows.iter().enumerate() {
                    if !valid[ra] {
                        continue;
                    }
                    let q = &src.row(ra)[qo..qo + dh];
                    let mut max = f64::NEG_INFINITY;
                    for (b, &rb) in rows.iter().enumerate() {
                        if !valid[rb] {
                            continue;
                        }
                        let k = &src.row(rb)[ko..ko + dh];
                        let s = q.iter().zip(k).map(|(x, y)| x * y).sum::<f64>() * scale;
                        p[a * n + b] = s;
                        max = max.max(s);
                    }
                    let mut total = 0.0;
                    for (b, &rb) in rows.iter().enumerate() {
                        if valid[rb] {
                            let e = (p[a * n + b] - max).exp();
                            p[a * n + b] = e;
                            total += e;
                        }
                    }
                    let o = &mut out.row_mut(ra)[qo..qo + dh];
                    for (b, &rb) in rows.iter().enumerate() {
                        if !valid[rb] {
                            continue;
                        }
                        let w = p[a * n + b] / total;
                        p[a * n + b] = w;
                        let v = &src.row(rb)[vo..vo + dh];
                        for (x, y) in o.iter_mut().zip(v) {
                            *x += w * y;
                        }
                    }
                }
                probs.push(p);
            }
        }
        let cache = AttentionCache {
            qkv: qkv.0,
            groups,
            valid,
            heads,
            probs,
        };
        self.push(out, Op::Attention(Box::new(cache)))
    }

    /// Mean squared error over the kept rows, as a `1 × 1` value.
    pub fn masked_mse(&mut self, pred: Var, target: Mat, keep: Arc<Vec<bool>>) -> Var {
        let p = self.value(pred);
        assert_eq!(p.shape(), target.shape());
        let mut sum = 0.0;
        let mut count = 0.0;
        for (r, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
            for (a, b) in p.row(r).iter().zip(target.row(r)) {
                sum += (a - b) * (a - b);
            }
            count += p.cols as f64;
        }
        let count = count.max(1.0);
        self.push(
            Mat::from_vec(1, 1, vec![sum / count]),
            Op::MaskedMse {
                pred: pred.0,
                target,
                keep,
                count,
            },
        )
    }

    /// Back-propagates from the `1 × 1` value `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::from_vec(1, 1, vec![1.0]));
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(name) => {
                    out.params.insert(name.clone(), g);
                }
                Op::MatMul(a, b) => {
                    let av = &self.nodes[*a].value;
                    let bv = &self.nodes[*b].value;
                    accumulate(&mut grads, *a, g.matmul(&bv.transpose()));
                    accumulate(&mut grads, *b, av.transpose().matmul(&g));
                }
                Op::AddBias(x, b) => {
                    let mut gb = Mat::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (s, v) in gb.data.iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[*a].value;
                    let bv = &self.nodes[*b].value;
                    accumulate(&mut grads, *a, g.zip_map(bv, |x, y| x * y));
                    accumulate(&mut grads, *b, g.zip_map(av, |x, y| x * y));
                }
                Op::AddScalar(x) => accumulate(&mut grads, *x, g),
                Op::Silu(x) => {
                    let xv = &self.nodes[*x].value;
                    let d = g.zip_map(xv, |gy, v| {
                        let s = sigmoid(v);
                        gy * s * (1.0 + v * (1.0 - s))
                    });
                    accumulate(&mut grads, *x, d);
                }
                Op::LayerNorm { x, rstd } => {
                    let y = &node.value;
                    let n = y.cols as f64;
                    let mut dx = Mat::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let (gy, yr) = (g.row(r), y.row(r));
                        let mean_g = gy.iter().sum::<f64>() / n;
                        let mean_gy = gy.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((o, a), b) in dx.row_mut(r).iter_mut().zip(gy).zip(yr) {
                            *o = rstd[r] * (a - mean_g - b * mean_gy);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Gather { x, index } => {
                    let src = &self.nodes[*x].value;
                    let mut dx = Mat::zeros(src.rows, src.cols);
                    for (i, &r) in index.iter().enumerate() {
                        for (o, v) in dx.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Columns { x, start } => {
                    let src = &self.nodes[*x].value;
                    let mut dx = Mat::zeros(src.rows, src.cols);
                    for r in 0..g.rows {
                        dx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::RowMask { x, keep } => {
                    let mut dx = g;
                    for (r, &k) in keep.iter().enumerate() {
                        if !k {
                            dx.row_mut(r).fill(0.0);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Attention(cache) => {
                    let dx = attention_backward(cache, &self.nodes[cache.qkv].value, &g);
                    accumulate(&mut grads, cache.qkv, dx);
                }
                Op::MaskedMse { pred, target, keep, count } => {
                    let p = &self.nodes[*pred].value;
                    let scale = 2.0 * g.data[0] / count;
                    let mut dp = Mat::zeros(p.rows, p.cols);
                    for (r, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
                        for ((o, a), b) in dp.row_mut(r).iter_mut().zip(p.row(r)).zip(target.row(r)) {
                            *o = scale * (a - b);
                        }
                    }
                    accumulate(&mut grads, *pred, dp);
                }
            }
        }
        out
    }
}

fn accumulate(grads: &mut [Option<Mat>], i: usize, g: Mat) {
    match &mut grads[i] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn attention_backward(cache: &AttentionCache, qkv: &Mat, g: &Mat) -> Mat {
    let d = qkv.cols / 3;
    let heads = cache.heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let valid = &cache.valid;
    let mut dx = Mat::zeros(qkv.rows, qkv.cols);
    for (gi, rows) in cache.groups.iter().enumerate() {
        let n = rows.len();
        for h in 0..heads {
            let p = &cache.probs[gi * heads + h];
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            for (a, &ra) in rows.iter().enumerate() {
                if !valid[ra] {
                    continue;
                }
                let go = &g.row(ra)[qo..qo + dh];
                // dP[a, b] = dO[a] · V[b]
                let mut dp = vec![0.0; n];
                let mut dot = 0.0;
                for (b, &rb) in rows.iter().enumerate() {
                    if !valid[rb] {
                        continue;
                    }
                    let v = &qkv.row(rb)[vo..vo + dh];
                    dp[b] = go.iter().zip(v).map(|(x, y)| x * y).sum();
                    dot += dp[b] * p[a * n + b];
                }
                for (b, &rb) in rows.iter().enumerate() {
                    if !valid[rb] {
                        continue;
                    }
                    let w = p[a * n + b];
                    let ds = w * (dp[b] - dot) * scale;
                    for c in 0..dh {
                        // dV[b] += P[a, b] dO[a]
                        dx.data[rb * qkv.cols + vo + c] += w * go[c];
                        dx.data[ra * qkv.cols + qo + c] += ds * qkv.data[rb * qkv.cols + ko + c];
                        dx.data[rb * qkv.cols + ko + c] += ds * qkv.data[ra * qkv.cols + qo + c];
                    }
                }
            }
        }
    }
    dx
}
