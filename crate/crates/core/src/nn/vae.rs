//! MLP variational autoencoder over visual-memory panoramas.

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::layers::{silu, silu_backward, Linear};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::geom::{Panorama, SemanticClass, NUM_CLASSES};

pub const LATENT_DIM: usize = 64;
/// Per-pixel channels: depth, r, g, b, then one-hot semantics.
pub const PIXEL_CHANNELS: usize = 4 + NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeConfig {
    pub width: usize,
    pub height: usize,
    pub hidden: usize,
    pub latent: usize,
    pub max_range_m: f64,
    /// When false the semantic one-hot input is zeroed and the cross-entropy term dropped.
    pub use_semantic: bool,
}

impl VaeConfig {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, hidden: 256, latent: LATENT_DIM, max_range_m: 8.0, use_semantic: true }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn input_dim(&self) -> usize {
        self.pixels() * PIXEL_CHANNELS
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLossWeights {
    pub l1: f64,
    pub ce: f64,
    pub info: f64,
}

impl Default for VaeLossWeights {
    fn default() -> Self {
        Self { l1: 1.0, ce: 1.0, info: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VaeLossParts {
    pub total: f64,
    pub l1: f64,
    pub ce: f64,
    pub mmd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    pub cfg: VaeConfig,
    pub enc1: Linear,
    pub enc_out: Linear,
    pub dec1: Linear,
    pub dec_out: Linear,
}

pub struct EncodeCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
}

pub struct DecodeCache {
    z: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
}

impl Vae {
    /// Registers parameters under `prefix`. Both output layers start at zero.
    pub fn new<R: Rng>(cfg: VaeConfig, ps: &mut ParamStore, prefix: &str, rng: &mut R) -> Self {
        let d = cfg.input_dim();
        Self {
            cfg,
            enc1: Linear::new(ps, &format!("{prefix}.enc1"), d, cfg.hidden, false, rng),
            enc_out: Linear::new(ps, &format!("{prefix}.enc_out"), cfg.hidden, 2 * cfg.latent, true, rng),
            dec1: Linear::new(ps, &format!("{prefix}.dec1"), cfg.latent, cfg.hidden, false, rng),
            dec_out: Linear::new(ps, &format!("{prefix}.dec_out"), cfg.hidden, d, true, rng),
        }
    }

    /// Flattened network input: depth / max_range, rgb / 255, one-hot class.
    pub fn panorama_input(&self, pano: &Panorama) -> Result<Vec<f64>> {
        if pano.width != self.cfg.width || pano.height != self.cfg.height {
            return Err(Error::Shape(format!(
                "panorama {}x{} for a {}x{} autoencoder",
                pano.width, pano.height, self.cfg.width, self.cfg.height
            )));
        }
        let mut x = vec![0.0; self.cfg.input_dim()];
        for p in 0..pano.len() {
            let o = p * PIXEL_CHANNELS;
            x[o] = pano.depth[p] as f64 / self.cfg.max_range_m;
            for c in 0..3 {
                x[o + 1 + c] = pano.color[p][c] as f64 / 255.0;
            }
            if self.cfg.use_semantic {
                x[o + 4 + pano.semantic[p].code() as usize] = 1.0;
            }
        }
        Ok(x)
    }

    pub fn batch_input(&self, panos: &[&Panorama]) -> Result<Array2<f64>> {
        let mut x = Array2::zeros((panos.len(), self.cfg.input_dim()));
        for (i, p) in panos.iter().enumerate() {
            let row = self.panorama_input(p)?;
            x.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
        }
        Ok(x)
    }

    /// Returns `(mu, log_var)`, each `[B, latent]`.
    pub fn encode(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, EncodeCache) {
        let pre = self.enc1.forward(ps, &x.view());
        let hidden = silu(&pre);
        let out = self.enc_out.forward(ps, &hidden.view());
        let k = self.cfg.latent;
        let mu = out.slice(s![.., ..k]).to_owned();
        let log_var = out.slice(s![.., k..]).to_owned();
        (mu, log_var, EncodeCache { x: x.clone(), pre, hidden })
    }

    pub fn encode_backward(&self, ps: &mut ParamStore, cache: &EncodeCache, dmu: &Array2<f64>, dlog_var: &Array2<f64>) {
        let k = self.cfg.latent;
        let mut dout = Array2::zeros((dmu.nrows(), 2 * k));
        dout.slice_mut(s![.., ..k]).assign(dmu);
        dout.slice_mut(s![.., k..]).assign(dlog_var);
        let dh = self.enc_out.backward(ps, &cache.hidden.view(), &dout);
        let dpre = silu_backward(&cache.pre, &dh);
        self.enc1.backward(ps, &cache.x.view(), &dpre);
    }

    /// Per-pixel logits `[B, pixels·12]`: depth, rgb regressions, then class logits.
    pub fn decode(&self, ps: &ParamStore, z: &Array2<f64>) -> (Array2<f64>, DecodeCache) {
        let pre = self.dec1.forward(ps, &z.view());
        let hidden = silu(&pre);
        let logits = self.dec_out.forward(ps, &hidden.view());
        (logits, DecodeCache { z: z.clone(), pre, hidden })
    }

    pub fn decode_backward(&self, ps: &mut ParamStore, cache: &DecodeCache, dlogits: &Array2<f64>) -> Array2<f64> {
        let dh = self.dec_out.backward(ps, &cache.hidden.view(), dlogits);
        let dpre = silu_backward(&cache.pre, &dh);
        self.dec1.backward(ps, &cache.z.view(), &dpre)
    }

    /// Converts one row of decoder logits into a panorama. Pixels whose most
    /// likely class is `no_label` are left uncovered.
    pub fn logits_to_panorama(&self, logits: &[f64]) -> Panorama {
        let mut pano = Panorama::empty(self.cfg.width, self.cfg.height);
        for p in 0..pano.len() {
            let o = p * PIXEL_CHANNELS;
            let class = argmax(&logits[o + 4..o + PIXEL_CHANNELS]);
            if class == 0 {
                continue;
            }
            pano.semantic[p] = SemanticClass::ALL[class];
            pano.depth[p] = (logits[o].clamp(0.0, 1.0) * self.cfg.max_range_m).max(1e-3) as f32;
            for c in 0..3 {
                pano.color[p][c] = (logits[o + 1 + c].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        pano
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Deterministic encoder pass for one panorama.
pub fn vae_encode(pano: &Panorama, ps: &ParamStore, vae: &Vae) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = vae.batch_input(&[pano])?;
    let (mu, log_var, _) = vae.encode(ps, &x);
    Ok((mu.row(0).to_vec(), log_var.row(0).to_vec()))
}

/// Decoder logits for one latent.
pub fn vae_decode(z: &[f64], ps: &ParamStore, vae: &Vae) -> Result<Vec<f64>> {
    if z.len() != vae.cfg.latent {
        return Err(Error::Shape(format!("latent of length {} for dimension {}", z.len(), vae.cfg.latent)));
    }
    let z = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row vector");
    Ok(vae.decode(ps, &z).0.row(0).to_vec())
}

/// Class index per pixel, row-major over the batch.
pub fn semantic_targets(panos: &[&Panorama]) -> Vec<usize> {
    panos.iter().flat_map(|p| p.semantic.iter().map(|c| c.code() as usize)).collect()
}

/// Median of pairwise squared distances among prior samples; `2·dim` when fewer than two.
pub fn mmd_bandwidth(prior: &Array2<f64>) -> f64 {
    let n = prior.nrows();
    if n < 2 {
        return 2.0 * prior.ncols() as f64;
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push((&prior.row(i) - &prior.row(j)).mapv(|v| v * v).sum());
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Biased MMD² between `z` and `prior` under `exp(-|a-b|²/h)`, plus its gradient in `z`.
pub fn mmd(z: &Array2<f64>, prior: &Array2<f64>, h: f64) -> (f64, Array2<f64>) {
    let (b, bp) = (z.nrows() as f64, prior.nrows() as f64);
    let mut value = 0.0;
    let mut dz = Array2::zeros(z.dim());
    for i in 0..z.nrows() {
        for j in 0..z.nrows() {
            let k = (-sq_dist(z.row(i), z.row(j)) / h).exp();
            value += k / (b * b);
            // Each ordered pair contributes to both endpoints; the factor 2 folds in (j, i).
            let coef = 2.0 / (b * b) * k * (-2.0 / h);
            let diff = &z.row(i) - &z.row(j);
            let mut row = dz.row_mut(i);
            row.scaled_add(coef, &diff);
        }
        for j in 0..prior.nrows() {
            let k = (-sq_dist(z.row(i), prior.row(j)) / h).exp();
            value -= 2.0 * k / (b * bp);
            let coef = -2.0 / (b * bp) * k * (-2.0 / h);
            let diff = &z.row(i) - &prior.row(j);
            let mut row = dz.row_mut(i);
            row.scaled_add(coef, &diff);
        }
    }
    for i in 0..prior.nrows() {
        for j in 0..prior.nrows() {
            value += (-sq_dist(prior.row(i), prior.row(j)) / h).exp() / (bp * bp);
        }
    }
    (value, dz)
}

/// Loss and gradients with respect to logits and latent samples.
///
/// `target` is the batch input encoding and `classes` the per-pixel class index.
pub fn vae_loss(
    cfg: &VaeConfig,
    logits: &Array2<f64>,
    target: &Array2<f64>,
    classes: &[usize],
    z: &Array2<f64>,
    prior: &Array2<f64>,
    weights: &VaeLossWeights,
) -> (VaeLossParts, Array2<f64>, Array2<f64>) {
    let batch = logits.nrows();
    let pixels = cfg.pixels();
    let n_reg = (batch * pixels * 4) as f64;
    let n_pix = (batch * pixels) as f64;
    let mut dlogits = Array2::zeros(logits.dim());
    let mut l1 = 0.0;
    let mut ce = 0.0;
    for b in 0..batch {
        let lrow = logits.row(b);
        let trow = target.row(b);
        let mut drow = dlogits.row_mut(b);
        for p in 0..pixels {
            let o = p * PIXEL_CHANNELS;
            for c in 0..4 {
                let r = lrow[o + c] - trow[o + c];
                l1 += r.abs();
                let sign = if r > 0.0 { 1.0 } else if r < 0.0 { -1.0 } else { 0.0 };
                drow[o + c] = weights.l1 * sign / n_reg;
            }
            if cfg.use_semantic {
                let seg = lrow.slice(s![o + 4..o + PIXEL_CHANNELS]);
                let m = seg.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                let sum: f64 = seg.iter().map(|v| (v - m).exp()).sum();
                let lse = m + sum.ln();
                let target_class = classes[b * pixels + p];
                ce += lse - seg[target_class];
                for k in 0..NUM_CLASSES {
                    let prob = (seg[k] - lse).exp();
                    let onehot = if k == target_class { 1.0 } else { 0.0 };
                    drow[o + 4 + k] = weights.ce * (prob - onehot) / n_pix;
                }
            }
        }
    }
    l1 /= n_reg;
    ce /= n_pix;
    let h = mmd_bandwidth(prior);
    let (mmd_value, mut dz) = mmd(z, prior, h);
    dz *= weights.info;
    let ce_term = if cfg.use_semantic { weights.ce * ce } else { 0.0 };
    let parts = VaeLossParts {
        total: weights.l1 * l1 + ce_term + weights.info * mmd_value,
        l1,
        ce,
        mmd: mmd_value,
    };
    (parts, dlogits, dz)
}

/// Noise and prior draws for one training step, kept explicit so the step is a pure function.
#[derive(Debug, Clone)]
pub struct VaeNoise {
    pub eps: Array2<f64>,
    pub prior: Array2<f64>,
}

impl VaeNoise {
    pub fn sample<R: Rng>(batch: usize, latent: usize, rng: &mut R) -> Self {
        Self {
            eps: Array2::from_shape_fn((batch, latent), |_| rng.sample(StandardNormal)),
            prior: Array2::from_shape_fn((batch, latent), |_| rng.sample(StandardNormal)),
        }
    }
}

/// Full forward/backward on a batch; gradients are accumulated into `ps`.
pub fn vae_forward_backward(
    vae: &Vae,
    ps: &mut ParamStore,
    x: &Array2<f64>,
    classes: &[usize],
    noise: &VaeNoise,
    weights: &VaeLossWeights,
    backward: bool,
) -> VaeLossParts {
    let (mu, log_var, enc) = vae.encode(ps, x);
    let std = log_var.mapv(|v| (0.5 * v).exp());
    let z = &mu + &(&std * &noise.eps);
    let (logits, dec) = vae.decode(ps, &z);
    let (parts, dlogits, dz_mmd) = vae_loss(&vae.cfg, &logits, x, classes, &z, &noise.prior, weights);
    if backward {
        let dz = vae.decode_backward(ps, &dec, &dlogits) + dz_mmd;
        let dlog_var = &dz * &noise.eps * &std * 0.5;
        vae.encode_backward(ps, &enc, &dz, &dlog_var);
    }
    parts
}

/// Fraction of pixels whose decoded class matches the input, using the mean latent.
pub fn reconstruction_accuracy(vae: &Vae, ps: &ParamStore, panos: &[&Panorama]) -> Result<f64> {
    let x = vae.batch_input(panos)?;
    let (mu, _, _) = vae.encode(ps, &x);
    let (logits, _) = vae.decode(ps, &mu);
    let classes = semantic_targets(panos);
    let pixels = vae.cfg.pixels();
    let mut hits = 0usize;
    for (b, row) in logits.axis_iter(Axis(0)).enumerate() {
        for p in 0..pixels {
            let o = p * PIXEL_CHANNELS;
            let row = row.as_slice().expect("contiguous logits");
            if argmax(&row[o + 4..o + PIXEL_CHANNELS]) == classes[b * pixels + p] {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / (panos.len() * pixels) as f64)
}
