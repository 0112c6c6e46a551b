//! 1-D UNet noise predictor over `[L, pose + latent]` sequences.
//!
//! Layout (c = base channels, L = sequence length):
//! in_conv → down1 (c, L) → pool → attn → down2 (2c, L/2) → pool →
//! mid1 → attn → mid2 (2c, L/4) → upsample ⧺ down2 → up2 (2c, L/2) → attn →
//! upsample ⧺ down1 → up1 (c, L) → norm → out_conv.
//! Diffusion time and the condition are embedded, summed, and added per
//! channel inside every residual block.

use ndarray::Array2;
use rand::Rng;

use super::layers::{
    add_per_sample, avg_pool2, avg_pool2_backward, concat_channels, silu, silu_backward, sinusoidal,
    split_channels, sum_per_sample, upsample2, upsample2_backward, Attention, AttentionCache, Conv1d, LayerNorm,
    LayerNormCache, Linear,
};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::geom::{HORIZON, POSE_DIM};

use super::vae::LATENT_DIM;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserConfig {
    pub seq_len: usize,
    pub pose_dim: usize,
    pub latent_dim: usize,
    pub past_len: usize,
    pub base_channels: usize,
    pub heads: usize,
    pub time_dim: usize,
    pub emb_dim: usize,
    /// Diffusion steps; valid `t` lie in `[0, timesteps)`.
    pub timesteps: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            seq_len: HORIZON,
            pose_dim: POSE_DIM,
            latent_dim: LATENT_DIM,
            past_len: HORIZON,
            base_channels: 32,
            heads: 4,
            time_dim: 32,
            emb_dim: 64,
            timesteps: 1000,
        }
    }
}

impl DenoiserConfig {
    pub fn feature_width(&self) -> usize {
        self.pose_dim + self.latent_dim
    }

    pub fn cond_width(&self) -> usize {
        self.past_len * self.pose_dim + self.latent_dim
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.base_channels;
        if self.seq_len % 4 != 0 || self.seq_len == 0 {
            return Err(Error::Config(format!("sequence length {} must be a positive multiple of 4", self.seq_len)));
        }
        if c == 0 || self.heads == 0 || c % self.heads != 0 {
            return Err(Error::Config(format!("{c} channels cannot split into {} heads", self.heads)));
        }
        if self.time_dim % 2 != 0 || self.emb_dim == 0 || self.timesteps == 0 {
            return Err(Error::Config("time embedding needs an even width and T > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ResBlock {
    n1: LayerNorm,
    c1: Conv1d,
    emb: Linear,
    n2: LayerNorm,
    c2: Conv1d,
    skip: Option<Linear>,
}

struct ResCache {
    x: Array2<f64>,
    n1: LayerNormCache,
    a1: Array2<f64>,
    cols1: Array2<f64>,
    n2: LayerNormCache,
    a2: Array2<f64>,
    cols2: Array2<f64>,
}

impl ResBlock {
    fn new<R: Rng>(ps: &mut ParamStore, name: &str, cin: usize, cout: usize, emb: usize, rng: &mut R) -> Self {
        Self {
            n1: LayerNorm::new(ps, &format!("{name}.n1"), cin),
            c1: Conv1d::new(ps, &format!("{name}.c1"), cin, cout, false, rng),
            emb: Linear::new(ps, &format!("{name}.emb"), emb, cout, false, rng),
            n2: LayerNorm::new(ps, &format!("{name}.n2"), cout),
            c2: Conv1d::new(ps, &format!("{name}.c2"), cout, cout, true, rng),
            skip: (cin != cout).then(|| Linear::new(ps, &format!("{name}.skip"), cin, cout, false, rng)),
        }
    }

    fn forward(&self, ps: &ParamStore, x: &Array2<f64>, emb_act: &Array2<f64>, seq: usize) -> (Array2<f64>, ResCache) {
        let (a1, n1) = self.n1.forward(ps, x);
        let (mut h, cols1) = self.c1.forward(ps, &silu(&a1), seq);
        add_per_sample(&mut h, &self.emb.forward(ps, &emb_act.view()), seq);
        let (a2, n2) = self.n2.forward(ps, &h);
        let (h2, cols2) = self.c2.forward(ps, &silu(&a2), seq);
        let out = match &self.skip {
            Some(l) => l.forward(ps, &x.view()) + h2,
            None => x + &h2,
        };
        (out, ResCache { x: x.clone(), n1, a1, cols1, n2, a2, cols2 })
    }

    /// Returns the input gradient and adds the embedding gradient into `demb`.
    fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &ResCache,
        dout: &Array2<f64>,
        emb_act: &Array2<f64>,
        demb: &mut Array2<f64>,
        seq: usize,
    ) -> Array2<f64> {
        let ds2 = self.c2.backward(ps, &cache.cols2, dout, seq);
        let dh = self.n2.backward(ps, &cache.n2, &silu_backward(&cache.a2, &ds2));
        *demb += &self.emb.backward(ps, &emb_act.view(), &sum_per_sample(&dh, seq));
        let ds1 = self.c1.backward(ps, &cache.cols1, &dh, seq);
        let mut dx = self.n1.backward(ps, &cache.n1, &silu_backward(&cache.a1, &ds1));
        match &self.skip {
            Some(l) => dx += &l.backward(ps, &cache.x.view(), dout),
            None => dx += dout,
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub cfg: DenoiserConfig,
    in_conv: Conv1d,
    down1: ResBlock,
    att1: Attention,
    down2: ResBlock,
    mid1: ResBlock,
    att_mid: Attention,
    mid2: ResBlock,
    up2: ResBlock,
    att2: Attention,
    up1: ResBlock,
    out_norm: LayerNorm,
    out_conv: Conv1d,
    /// Per-feature multiplier on `x_t` added to the output. The channel width is
    /// below the feature width, so without it the network cannot pass `x_t` through.
    gate: Linear,
    time1: Linear,
    time2: Linear,
    cond1: Linear,
    cond2: Linear,
    pos: Array2<f64>,
}

pub struct DenoiserCache {
    temb: Array2<f64>,
    t_pre: Array2<f64>,
    t_hidden: Array2<f64>,
    cond: Array2<f64>,
    c_pre: Array2<f64>,
    c_hidden: Array2<f64>,
    emb: Array2<f64>,
    emb_act: Array2<f64>,
    in_cols: Array2<f64>,
    d1: ResCache,
    a1: AttentionCache,
    d2: ResCache,
    m1: ResCache,
    am: AttentionCache,
    m2: ResCache,
    u2: ResCache,
    a2: AttentionCache,
    u1: ResCache,
    on: LayerNormCache,
    o_act: Array2<f64>,
    out_cols: Array2<f64>,
    x: Array2<f64>,
}

impl Denoiser {
    /// Registers parameters under `prefix`. The output convolution and the
    /// second convolution of every block start at zero.
    pub fn new<R: Rng>(cfg: DenoiserConfig, ps: &mut ParamStore, prefix: &str, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.base_channels;
        let e = cfg.emb_dim;
        let f = cfg.feature_width();
        let n = |s: &str| format!("{prefix}.{s}");
        let mut pos = Array2::zeros((cfg.seq_len, c));
        for i in 0..cfg.seq_len {
            let row = sinusoidal(i as f64, c - c % 2);
            for (k, v) in row.into_iter().enumerate() {
                pos[[i, k]] = v;
            }
        }
        Ok(Self {
            cfg,
            in_conv: Conv1d::new(ps, &n("in_conv"), f, c, false, rng),
            down1: ResBlock::new(ps, &n("down1"), c, c, e, rng),
            att1: Attention::new(ps, &n("att1"), c, cfg.heads, true, rng),
            down2: ResBlock::new(ps, &n("down2"), c, 2 * c, e, rng),
            mid1: ResBlock::new(ps, &n("mid1"), 2 * c, 2 * c, e, rng),
            att_mid: Attention::new(ps, &n("att_mid"), 2 * c, cfg.heads, true, rng),
            mid2: ResBlock::new(ps, &n("mid2"), 2 * c, 2 * c, e, rng),
            up2: ResBlock::new(ps, &n("up2"), 4 * c, 2 * c, e, rng),
            att2: Attention::new(ps, &n("att2"), 2 * c, cfg.heads, true, rng),
            up1: ResBlock::new(ps, &n("up1"), 3 * c, c, e, rng),
            out_norm: LayerNorm::new(ps, &n("out_norm"), c),
            out_conv: Conv1d::new(ps, &n("out_conv"), c, f, true, rng),
            gate: Linear::new(ps, &n("gate"), e, f, true, rng),
            time1: Linear::new(ps, &n("time1"), cfg.time_dim, e, false, rng),
            time2: Linear::new(ps, &n("time2"), e, e, false, rng),
            cond1: Linear::new(ps, &n("cond1"), cfg.cond_width(), e, false, rng),
            cond2: Linear::new(ps, &n("cond2"), e, e, false, rng),
            pos,
        })
    }

    fn check_inputs(&self, x: &Array2<f64>, t: &[usize], cond: &Array2<f64>) -> Result<usize> {
        let cfg = &self.cfg;
        let batch = t.len();
        if x.dim() != (batch * cfg.seq_len, cfg.feature_width()) {
            return Err(Error::Shape(format!(
                "sequence batch {:?}, expected ({}, {})",
                x.dim(),
                batch * cfg.seq_len,
                cfg.feature_width()
            )));
        }
        if cond.dim() != (batch, cfg.cond_width()) {
            return Err(Error::Shape(format!("condition {:?}, expected ({batch}, {})", cond.dim(), cfg.cond_width())));
        }
        if let Some(&bad) = t.iter().find(|&&t| t >= cfg.timesteps) {
            return Err(Error::Index(format!("diffusion step {bad} outside [0, {})", cfg.timesteps)));
        }
        Ok(batch)
    }

    /// Predicts the noise for `B` stacked sequences `[B·L, F]` at steps `t` with conditions `[B, cond]`.
    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>, t: &[usize], cond: &Array2<f64>) -> Result<(Array2<f64>, DenoiserCache)> {
        let batch = self.check_inputs(x, t, cond)?;
        let l = self.cfg.seq_len;
        let mut temb = Array2::zeros((batch, self.cfg.time_dim));
        for (b, &ti) in t.iter().enumerate() {
            for (k, v) in sinusoidal(ti as f64, self.cfg.time_dim).into_iter().enumerate() {
                temb[[b, k]] = v;
            }
        }
        let t_pre = self.time1.forward(ps, &temb.view());
        let t_hidden = silu(&t_pre);
        let c_pre = self.cond1.forward(ps, &cond.view());
        let c_hidden = silu(&c_pre);
        let emb = self.time2.forward(ps, &t_hidden.view()) + self.cond2.forward(ps, &c_hidden.view());
        let emb_act = silu(&emb);

        let (mut h, in_cols) = self.in_conv.forward(ps, x, l);
        for (r, mut row) in h.rows_mut().into_iter().enumerate() {
            row += &self.pos.row(r % l);
        }
        let (s1, d1) = self.down1.forward(ps, &h, &emb_act, l);
        let (h, a1) = self.att1.forward(ps, &avg_pool2(&s1, l), l / 2);
        let (s2, d2) = self.down2.forward(ps, &h, &emb_act, l / 2);
        let h = avg_pool2(&s2, l / 2);
        let (h, m1) = self.mid1.forward(ps, &h, &emb_act, l / 4);
        let (h, am) = self.att_mid.forward(ps, &h, l / 4);
        let (h, m2) = self.mid2.forward(ps, &h, &emb_act, l / 4);
        let (h, u2) = self.up2.forward(ps, &concat_channels(&upsample2(&h), &s2), &emb_act, l / 2);
        let (h, a2) = self.att2.forward(ps, &h, l / 2);
        let (h, u1) = self.up1.forward(ps, &concat_channels(&upsample2(&h), &s1), &emb_act, l);
        let (o_act, on) = self.out_norm.forward(ps, &h);
        let (mut y, out_cols) = self.out_conv.forward(ps, &silu(&o_act), l);
        let gate = self.gate.forward(ps, &emb_act.view());
        for (r, (mut yr, xr)) in y.rows_mut().into_iter().zip(x.rows()).enumerate() {
            yr.zip_mut_with(&(&xr * &gate.row(r / l)), |a, b| *a += b);
        }
        let cache = DenoiserCache {
            temb,
            t_pre,
            t_hidden,
            cond: cond.clone(),
            c_pre,
            c_hidden,
            emb,
            emb_act,
            in_cols,
            d1,
            a1,
            d2,
            m1,
            am,
            m2,
            u2,
            a2,
            u1,
            on,
            o_act,
            out_cols,
            x: x.clone(),
        };
        Ok((y, cache))
    }

    /// Accumulates parameter gradients for upstream gradient `dy`.
    pub fn backward(&self, ps: &mut ParamStore, cache: &DenoiserCache, dy: &Array2<f64>) {
        let l = self.cfg.seq_len;
        let c = self.cfg.base_channels;
        let ea = &cache.emb_act;
        let mut demb = Array2::zeros(ea.dim());
        let mut dgate = Array2::zeros((ea.nrows(), self.cfg.feature_width()));
        for (r, (dr, xr)) in dy.rows().into_iter().zip(cache.x.rows()).enumerate() {
            let mut g = dgate.row_mut(r / l);
            g += &(&dr * &xr);
        }
        demb += &self.gate.backward(ps, &ea.view(), &dgate);

        let dsilu = self.out_conv.backward(ps, &cache.out_cols, dy, l);
        let dh = self.out_norm.backward(ps, &cache.on, &silu_backward(&cache.o_act, &dsilu));
        let dcat = self.up1.backward(ps, &cache.u1, &dh, ea, &mut demb, l);
        let (dup, mut ds1) = split_channels(&dcat, 2 * c);
        let dh = upsample2_backward(&dup);
        let dh = self.att2.backward(ps, &cache.a2, &dh, l / 2);
        let dcat = self.up2.backward(ps, &cache.u2, &dh, ea, &mut demb, l / 2);
        let (dup, mut ds2) = split_channels(&dcat, 2 * c);
        let dh = upsample2_backward(&dup);
        let dh = self.mid2.backward(ps, &cache.m2, &dh, ea, &mut demb, l / 4);
        let dh = self.att_mid.backward(ps, &cache.am, &dh, l / 4);
        let dh = self.mid1.backward(ps, &cache.m1, &dh, ea, &mut demb, l / 4);
        ds2 += &avg_pool2_backward(&dh);
        let dh = self.down2.backward(ps, &cache.d2, &ds2, ea, &mut demb, l / 2);
        let dh = self.att1.backward(ps, &cache.a1, &dh, l / 2);
        ds1 += &avg_pool2_backward(&dh);
        let dh = self.down1.backward(ps, &cache.d1, &ds1, ea, &mut demb, l);
        self.in_conv.backward(ps, &cache.in_cols, &dh, l);

        let demb = silu_backward(&cache.emb, &demb);
        let dt = self.time2.backward(ps, &cache.t_hidden.view(), &demb);
        self.time1.backward(ps, &cache.temb.view(), &silu_backward(&cache.t_pre, &dt));
        let dc = self.cond2.backward(ps, &cache.c_hidden.view(), &demb);
        self.cond1.backward(ps, &cache.cond.view(), &silu_backward(&cache.c_pre, &dc));
    }
}

/// Noise prediction for a batch; see [`Denoiser::forward`].
pub fn denoiser_forward(
    x_t: &Array2<f64>,
    t: &[usize],
    cond: &Array2<f64>,
    ps: &ParamStore,
    net: &Denoiser,
) -> Result<Array2<f64>> {
    Ok(net.forward(ps, x_t, t, cond)?.0)
}

/// Past-pose condition slot of `past_len` rows, right-aligned. With `keep = Some(k)`
/// only the last `k` rows survive and the rest are zero.
pub fn past_condition(past: &[[f64; POSE_DIM]], past_len: usize, keep: Option<usize>) -> Result<Vec<f64>> {
    if past.len() > past_len {
        return Err(Error::Shape(format!("past of {} steps for a {past_len}-step slot", past.len())));
    }
    let keep = keep.unwrap_or(past.len()).min(past.len());
    let mut out = vec![0.0; past_len * POSE_DIM];
    let first = past.len() - keep;
    for (i, row) in past.iter().enumerate().skip(first) {
        let slot = past_len - past.len() + i;
        out[slot * POSE_DIM..(slot + 1) * POSE_DIM].copy_from_slice(row);
    }
    Ok(out)
}

/// Markovian ablation: only the last three past steps reach the network.
pub fn markovian_condition(past: &[[f64; POSE_DIM]], past_len: usize) -> Result<Vec<f64>> {
    if past.len() < 3 {
        return Err(Error::Shape(format!("markovian condition needs 3 past steps, got {}", past.len())));
    }
    past_condition(past, past_len, Some(3))
}
