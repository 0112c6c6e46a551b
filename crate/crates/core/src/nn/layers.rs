//! Differentiable building blocks over row-major `[rows, channels]` activations.
//!
//! Sequence layers see a batch of `B` sequences of length `L` stacked as
//! `B·L` rows. Each `forward` returns whatever its `backward` needs; `backward`
//! accumulates parameter gradients into the store and returns the input gradient.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::params::{ParamId, ParamStore};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v * sigmoid(v))
}

/// Gradient of SiLU at pre-activation `x`.
pub fn silu_backward(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(x).for_each(|d, &v| {
        let s = sigmoid(v);
        *d *= s * (1.0 + v * (1.0 - s));
    });
    dx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Weight `[in, out]` with He-style init, or zeros when `zero` is set.
    pub fn new<R: Rng>(ps: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, zero: bool, rng: &mut R) -> Self {
        let w = if zero {
            ps.add_zeros(&format!("{name}.w"), &[fan_in, fan_out])
        } else {
            ps.add_normal(&format!("{name}.w"), &[fan_in, fan_out], fan_in, 1.0, rng)
        };
        let b = ps.add_zeros(&format!("{name}.b"), &[fan_out]);
        Self { w, b, fan_in, fan_out }
    }

    pub fn forward(&self, ps: &ParamStore, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&ps.matrix(self.w));
        y += &ps.vector(self.b);
        y
    }

    pub fn backward(&self, ps: &mut ParamStore, x: &ArrayView2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        let dx = dy.dot(&ps.matrix(self.w).t());
        let dw = x.t().dot(dy);
        let db = dy.sum_axis(Axis(0));
        ps.accumulate(self.w, dw.iter());
        ps.accumulate(self.b, db.iter());
        dx
    }
}

/// Per-row normalization over channels with learned gain and bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNorm {
    pub g: ParamId,
    pub b: ParamId,
    pub width: usize,
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, width: usize) -> Self {
        let g = ps.add(&format!("{name}.g"), &[width], || 1.0);
        let b = ps.add_zeros(&format!("{name}.b"), &[width]);
        Self { g, b, width }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let n = x.ncols() as f64;
        let mean = x.sum_axis(Axis(1)) / n;
        let centered = x - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        let xhat = centered * &inv_std.view().insert_axis(Axis(1));
        let mut y = &xhat * &ps.vector(self.g);
        y += &ps.vector(self.b);
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, ps: &mut ParamStore, cache: &LayerNormCache, dy: &Array2<f64>) -> Array2<f64> {
        let n = dy.ncols() as f64;
        let dg = (dy * &cache.xhat).sum_axis(Axis(0));
        let db = dy.sum_axis(Axis(0));
        let dxhat = dy * &ps.vector(self.g);
        let mean_d = dxhat.sum_axis(Axis(1)) / n;
        let mean_dx = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / n;
        let mut dx = dxhat - &mean_d.view().insert_axis(Axis(1));
        dx -= &(&cache.xhat * &mean_dx.view().insert_axis(Axis(1)));
        dx *= &cache.inv_std.view().insert_axis(Axis(1));
        ps.accumulate(self.g, dg.iter());
        ps.accumulate(self.b, db.iter());
        dx
    }
}

/// Same-length 1-D convolution, kernel 3, zero padding, via im2col.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv1d {
    pub lin: Linear,
    pub cin: usize,
    pub cout: usize,
}

impl Conv1d {
    pub fn new<R: Rng>(ps: &mut ParamStore, name: &str, cin: usize, cout: usize, zero: bool, rng: &mut R) -> Self {
        Self { lin: Linear::new(ps, name, 3 * cin, cout, zero, rng), cin, cout }
    }

    fn im2col(x: &Array2<f64>, seq: usize) -> Array2<f64> {
        let (rows, c) = x.dim();
        let mut cols = Array2::zeros((rows, 3 * c));
        for r in 0..rows {
            let i = r % seq;
            for k in 0..3 {
                let src = i as isize + k as isize - 1;
                if src < 0 || src >= seq as isize {
                    continue;
                }
                let src_row = r - i + src as usize;
                cols.slice_mut(s![r, k * c..(k + 1) * c]).assign(&x.row(src_row));
            }
        }
        cols
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>, seq: usize) -> (Array2<f64>, Array2<f64>) {
        let cols = Self::im2col(x, seq);
        let y = self.lin.forward(ps, &cols.view());
        (y, cols)
    }

    pub fn backward(&self, ps: &mut ParamStore, cols: &Array2<f64>, dy: &Array2<f64>, seq: usize) -> Array2<f64> {
        let dcols = self.lin.backward(ps, &cols.view(), dy);
        let rows = dy.nrows();
        let c = self.cin;
        let mut dx = Array2::zeros((rows, c));
        for r in 0..rows {
            let i = r % seq;
            for k in 0..3 {
                let src = i as isize + k as isize - 1;
                if src < 0 || src >= seq as isize {
                    continue;
                }
                let src_row = r - i + src as usize;
                let mut row = dx.row_mut(src_row);
                row += &dcols.slice(s![r, k * c..(k + 1) * c]);
            }
        }
        dx
    }
}

/// Residual multi-head self-attention over the sequence axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attention {
    pub norm: LayerNorm,
    pub qkv: Linear,
    pub out: Linear,
    pub heads: usize,
    pub width: usize,
}

pub struct AttentionCache {
    norm: LayerNormCache,
    normed: Array2<f64>,
    qkv: Array2<f64>,
    /// Softmax rows per (sample, head), each `[L, L]`.
    probs: Vec<Array2<f64>>,
    merged: Array2<f64>,
}

impl Attention {
    pub fn new<R: Rng>(ps: &mut ParamStore, name: &str, width: usize, heads: usize, zero_out: bool, rng: &mut R) -> Self {
        assert!(width % heads == 0, "width {width} not divisible by {heads} heads");
        Self {
            norm: LayerNorm::new(ps, &format!("{name}.norm"), width),
            qkv: Linear::new(ps, &format!("{name}.qkv"), width, 3 * width, false, rng),
            out: Linear::new(ps, &format!("{name}.out"), width, width, zero_out, rng),
            heads,
            width,
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>, seq: usize) -> (Array2<f64>, AttentionCache) {
        let (normed, norm) = self.norm.forward(ps, x);
        let qkv = self.qkv.forward(ps, &normed.view());
        let batch = x.nrows() / seq;
        let d = self.width / self.heads;
        let scale = 1.0 / (d as f64).sqrt();
        let mut merged = Array2::zeros((x.nrows(), self.width));
        let mut probs = Vec::with_capacity(batch * self.heads);
        for b in 0..batch {
            let rows = b * seq..(b + 1) * seq;
            for h in 0..self.heads {
                let q = qkv.slice(s![rows.clone(), h * d..(h + 1) * d]);
                let k = qkv.slice(s![rows.clone(), self.width + h * d..self.width + (h + 1) * d]);
                let v = qkv.slice(s![rows.clone(), 2 * self.width + h * d..2 * self.width + (h + 1) * d]);
                let mut p = q.dot(&k.t()) * scale;
                for mut row in p.rows_mut() {
                    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|v| (v - m).exp());
                    let sum = row.sum();
                    row /= sum;
                }
                merged.slice_mut(s![rows.clone(), h * d..(h + 1) * d]).assign(&p.dot(&v));
                probs.push(p);
            }
        }
        let y = x + &self.out.forward(ps, &merged.view());
        (y, AttentionCache { norm, normed, qkv, probs, merged })
    }

    pub fn backward(&self, ps: &mut ParamStore, cache: &AttentionCache, dy: &Array2<f64>, seq: usize) -> Array2<f64> {
        let dmerged = self.out.backward(ps, &cache.merged.view(), dy);
        let batch = dy.nrows() / seq;
        let d = self.width / self.heads;
        let scale = 1.0 / (d as f64).sqrt();
        let mut dqkv = Array2::zeros(cache.qkv.dim());
        for b in 0..batch {
            let rows = b * seq..(b + 1) * seq;
            for h in 0..self.heads {
                let p = &cache.probs[b * self.heads + h];
                let qc = s![rows.clone(), h * d..(h + 1) * d];
                let kc = s![rows.clone(), self.width + h * d..self.width + (h + 1) * d];
                let vc = s![rows.clone(), 2 * self.width + h * d..2 * self.width + (h + 1) * d];
                let q = cache.qkv.slice(qc);
                let k = cache.qkv.slice(kc);
                let v = cache.qkv.slice(vc);
                let dout = dmerged.slice(s![rows.clone(), h * d..(h + 1) * d]);
                let dp = dout.dot(&v.t());
                let dv = p.t().dot(&dout);
                let row_dot = (&dp * p).sum_axis(Axis(1));
                let ds = (dp - &row_dot.view().insert_axis(Axis(1))) * p * scale;
                let dq = ds.dot(&k);
                let dk = ds.t().dot(&q);
                dqkv.slice_mut(qc).assign(&dq);
                dqkv.slice_mut(kc).assign(&dk);
                dqkv.slice_mut(vc).assign(&dv);
            }
        }
        let dnormed = self.qkv.backward(ps, &cache.normed.view(), &dqkv);
        let mut dx = self.norm.backward(ps, &cache.norm, &dnormed);
        dx += dy;
        dx
    }

    /// Attention weights of the last forward pass, one `[L, L]` matrix per (sample, head).
    pub fn probabilities(cache: &AttentionCache) -> &[Array2<f64>] {
        &cache.probs
    }
}

/// Halves the sequence length by averaging adjacent pairs.
pub fn avg_pool2(x: &Array2<f64>, seq: usize) -> Array2<f64> {
    assert!(seq % 2 == 0, "cannot pool odd length {seq}");
    let rows = x.nrows() / 2;
    let mut y = Array2::zeros((rows, x.ncols()));
    for r in 0..rows {
        let mut row = y.row_mut(r);
        row.assign(&x.row(2 * r));
        row += &x.row(2 * r + 1);
        row *= 0.5;
    }
    y
}

pub fn avg_pool2_backward(dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = Array2::zeros((dy.nrows() * 2, dy.ncols()));
    for r in 0..dy.nrows() {
        let half = dy.row(r).mapv(|v| v * 0.5);
        dx.row_mut(2 * r).assign(&half);
        dx.row_mut(2 * r + 1).assign(&half);
    }
    dx
}

/// Doubles the sequence length by repeating each step.
pub fn upsample2(x: &Array2<f64>) -> Array2<f64> {
    let mut y = Array2::zeros((x.nrows() * 2, x.ncols()));
    for r in 0..x.nrows() {
        y.row_mut(2 * r).assign(&x.row(r));
        y.row_mut(2 * r + 1).assign(&x.row(r));
    }
    y
}

pub fn upsample2_backward(dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = Array2::zeros((dy.nrows() / 2, dy.ncols()));
    for r in 0..dx.nrows() {
        let mut row = dx.row_mut(r);
        row.assign(&dy.row(2 * r));
        row += &dy.row(2 * r + 1);
    }
    dx
}

pub fn concat_channels(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts differ")
}

pub fn split_channels(x: &Array2<f64>, at: usize) -> (Array2<f64>, Array2<f64>) {
    (x.slice(s![.., ..at]).to_owned(), x.slice(s![.., at..]).to_owned())
}

/// Sinusoidal features of a scalar position: `[sin(p·f_i)…, cos(p·f_i)…]`.
pub fn sinusoidal(pos: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64).ln() * i as f64 / half as f64).exp();
        out[i] = (pos * freq).sin();
        out[half + i] = (pos * freq).cos();
    }
    out
}

/// Adds one row per sample to each of that sample's `seq` rows.
pub fn add_per_sample(x: &mut Array2<f64>, per_sample: &Array2<f64>, seq: usize) {
    for (r, mut row) in x.rows_mut().into_iter().enumerate() {
        row += &per_sample.row(r / seq);
    }
}

/// Gradient of [`add_per_sample`] with respect to the per-sample rows.
pub fn sum_per_sample(dx: &Array2<f64>, seq: usize) -> Array2<f64> {
    let batch = dx.nrows() / seq;
    let mut out = Array2::zeros((batch, dx.ncols()));
    for (r, row) in dx.rows().into_iter().enumerate() {
        let mut o = out.row_mut(r / seq);
        o += &row;
    }
    out
}
