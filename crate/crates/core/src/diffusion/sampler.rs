//! Forward noising, single reverse steps, and the batched DDPM / DDIM / hybrid samplers.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::nn::{Denoiser, ParamStore};
use crate::scene::mix_seed;

pub fn q_sample(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    if x0.len() != eps.len() {
        return Err(Error::Shape(format!("x0 has {} values, noise {}", x0.len(), eps.len())));
    }
    let (a, b) = (sched.alpha_bar[t].sqrt(), (1.0 - sched.alpha_bar[t]).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// `x_{t-1} = (x_t − (1−α_t)/√(1−ᾱ_t)·ε̂)/√α_t + σ_t·z`. At `t = 0` the noise must be absent or zero.
pub fn ddpm_step(x_t: &[f64], t: usize, eps_hat: &[f64], sched: &NoiseSchedule, z: Option<&[f64]>) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    if eps_hat.len() != x_t.len() || z.is_some_and(|z| z.len() != x_t.len()) {
        return Err(Error::Shape("ddpm_step inputs differ in length".into()));
    }
    if t == 0 && z.is_some_and(|z| z.iter().any(|v| *v != 0.0)) {
        return Err(Error::Contract("noise injected at t = 0".into()));
    }
    let alpha = sched.alpha[t];
    let coef = (1.0 - alpha) / (1.0 - sched.alpha_bar[t]).sqrt();
    let inv = 1.0 / alpha.sqrt();
    let sigma = sched.sigma[t];
    Ok((0..x_t.len())
        .map(|i| inv * (x_t[i] - coef * eps_hat[i]) + z.map_or(0.0, |z| sigma * z[i]))
        .collect())
}

/// Deterministic DDIM (η = 0) jump from `t` to `t_prev`; `None` means the clean sample.
pub fn ddim_step(x_t: &[f64], t: usize, t_prev: Option<usize>, eps_hat: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    if t_prev.is_some_and(|p| p >= t) {
        return Err(Error::Contract(format!("DDIM target step {t_prev:?} is not below {t}")));
    }
    if eps_hat.len() != x_t.len() {
        return Err(Error::Shape("ddim_step inputs differ in length".into()));
    }
    let ab = sched.alpha_bar[t];
    let ab_prev = sched.alpha_bar_at(t_prev);
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    let (pa, pb) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
    Ok((0..x_t.len())
        .map(|i| {
            let x0 = (x_t[i] - sb * eps_hat[i]) / sa;
            pa * x0 + pb * eps_hat[i]
        })
        .collect())
}

/// Posterior-mean noise estimate when the data are `N(mu, var)` per column.
///
/// `x_t` is row-major with `mu.len()` columns.
pub fn gaussian_oracle_eps(x_t: &[f64], t: usize, mu: &[f64], var: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    if mu.len() != var.len() || mu.is_empty() || x_t.len() % mu.len() != 0 {
        return Err(Error::Shape("oracle mean/variance do not tile the input".into()));
    }
    if let Some(v) = var.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("oracle variance {v} must be positive")));
    }
    let ab = sched.alpha_bar[t];
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x_t
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let (m, v) = (mu[i % mu.len()], var[i % mu.len()]);
            let x0 = (sa * v * x + (1.0 - ab) * m) / (ab * v + 1.0 - ab);
            (x - sa * x0) / sb
        })
        .collect())
}

/// Anything that predicts noise for a stack of `B` sequences `[B·L, F]` with conditions `[B, C]`.
pub trait EpsModel {
    fn predict(&self, x: &Array2<f64>, t: &[usize], cond: &Array2<f64>) -> Result<Array2<f64>>;
}

pub struct DenoiserModel<'a> {
    pub net: &'a Denoiser,
    pub params: &'a ParamStore,
}

impl EpsModel for DenoiserModel<'_> {
    fn predict(&self, x: &Array2<f64>, t: &[usize], cond: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.net.forward(self.params, x, t, cond)?.0)
    }
}

/// Closed-form noise predictor for a diagonal Gaussian target; ignores the condition.
pub struct GaussianOracle<'a> {
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
    pub sched: &'a NoiseSchedule,
}

impl EpsModel for GaussianOracle<'_> {
    fn predict(&self, x: &Array2<f64>, t: &[usize], _cond: &Array2<f64>) -> Result<Array2<f64>> {
        let rows_per = x.nrows() / t.len().max(1);
        let mut out = Array2::zeros(x.dim());
        for (b, &tb) in t.iter().enumerate() {
            let rows = x.slice(ndarray::s![b * rows_per..(b + 1) * rows_per, ..]);
            let flat: Vec<f64> = rows.iter().copied().collect();
            let eps = gaussian_oracle_eps(&flat, tb, &self.mu, &self.var, self.sched)?;
            let mut dst = out.slice_mut(ndarray::s![b * rows_per..(b + 1) * rows_per, ..]);
            for (d, e) in dst.iter_mut().zip(eps) {
                *d = e;
            }
        }
        Ok(out)
    }
}

/// Wraps a model and counts how many times it is evaluated.
pub struct CountingModel<'a, M: EpsModel> {
    pub inner: &'a M,
    pub calls: Cell<usize>,
}

impl<'a, M: EpsModel> CountingModel<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        Self { inner, calls: Cell::new(0) }
    }
}

impl<M: EpsModel> EpsModel for CountingModel<'_, M> {
    fn predict(&self, x: &Array2<f64>, t: &[usize], cond: &Array2<f64>) -> Result<Array2<f64>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.predict(x, t, cond)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMode {
    Ddpm,
    Ddim,
    Hybrid,
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerMode::Ddpm => "ddpm",
            SamplerMode::Ddim => "ddim",
            SamplerMode::Hybrid => "hybrid",
        })
    }
}

impl FromStr for SamplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpm" => Ok(SamplerMode::Ddpm),
            "ddim" => Ok(SamplerMode::Ddim),
            "hybrid" => Ok(SamplerMode::Hybrid),
            other => Err(Error::Config(format!("unknown sampler {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    pub ddim_steps: usize,
    pub ddpm_tail_steps: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { mode: SamplerMode::Hybrid, ddim_steps: 20, ddpm_tail_steps: 10, batch: 15, seed: 0 }
    }
}

impl SamplerConfig {
    /// The five-step tail variant.
    pub fn short_tail() -> Self {
        Self { ddpm_tail_steps: 5, ..Self::default() }
    }

    pub fn ddpm(batch: usize, seed: u64) -> Self {
        Self { mode: SamplerMode::Ddpm, ddim_steps: 0, ddpm_tail_steps: 0, batch, seed }
    }

    pub fn ddim(steps: usize, batch: usize, seed: u64) -> Self {
        Self { mode: SamplerMode::Ddim, ddim_steps: steps, ddpm_tail_steps: 0, batch, seed }
    }

    fn tail(&self) -> usize {
        match self.mode {
            SamplerMode::Hybrid => self.ddpm_tail_steps,
            _ => 0,
        }
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("sampler batch must be at least 1".into()));
        }
        if self.mode != SamplerMode::Ddpm {
            let tail = self.tail();
            if self.ddim_steps == 0 || tail >= steps || self.ddim_steps > steps - tail {
                return Err(Error::Config(format!(
                    "{} DDIM steps with a {tail}-step tail do not fit in T = {steps}",
                    self.ddim_steps
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReverseStep {
    Ddpm { t: usize },
    Ddim { t: usize, prev: Option<usize> },
}

/// Uniformly spaced DDIM steps over `[tail, T-1]`, both ends included.
pub fn ddim_timesteps(steps: usize, n: usize, tail: usize) -> Vec<usize> {
    if n == 1 {
        return vec![steps - 1];
    }
    let span = (steps - 1 - tail) as f64;
    (0..n).map(|i| tail + (span * i as f64 / (n - 1) as f64).round() as usize).collect()
}

/// The ordered reverse updates a sampler performs; one denoiser call each.
pub fn reverse_plan(cfg: &SamplerConfig, steps: usize) -> Result<Vec<ReverseStep>> {
    cfg.validate(steps)?;
    if cfg.mode == SamplerMode::Ddpm {
        return Ok((0..steps).rev().map(|t| ReverseStep::Ddpm { t }).collect());
    }
    let tail = cfg.tail();
    let times = ddim_timesteps(steps, cfg.ddim_steps, tail);
    let mut plan = Vec::with_capacity(times.len() + tail);
    for i in (0..times.len()).rev() {
        let prev = if i > 0 { Some(times[i - 1]) } else { tail.checked_sub(1) };
        plan.push(ReverseStep::Ddim { t: times[i], prev });
    }
    plan.extend((0..tail).rev().map(|t| ReverseStep::Ddpm { t }));
    Ok(plan)
}

/// Standard-normal draws for `(seed, sample, counter)`; independent of batch composition.
pub fn noise_stream(seed: u64, sample: u64, counter: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, sample]));
    rng.set_stream(counter);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    /// One `[L, F]` array per sample.
    pub samples: Vec<Array2<f64>>,
    pub calls_per_sample: usize,
}

/// Draws `cfg.batch` samples of shape `[len, width]` under one condition row.
pub fn hybrid_sample<M: EpsModel>(
    model: &M,
    cond: &Array2<f64>,
    shape: (usize, usize),
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
) -> Result<SampleBatch> {
    let plan = reverse_plan(cfg, sched.steps())?;
    if cond.nrows() != 1 {
        return Err(Error::Shape(format!("expected one condition row, got {}", cond.nrows())));
    }
    let (len, width) = shape;
    let per = len * width;
    let b = cfg.batch;
    let conds = Array2::from_shape_fn((b, cond.ncols()), |(_, j)| cond[[0, j]]);
    let mut x = Array2::zeros((b * len, width));
    for s in 0..b {
        let z = noise_stream(cfg.seed, s as u64, 0, per);
        x.as_slice_mut().expect("contiguous")[s * per..(s + 1) * per].copy_from_slice(&z);
    }
    for (k, step) in plan.iter().enumerate() {
        let t = match *step {
            ReverseStep::Ddpm { t } | ReverseStep::Ddim { t, .. } => t,
        };
        let eps = model.predict(&x, &vec![t; b], &conds)?;
        let xs = x.as_slice_mut().expect("contiguous");
        let es = eps.as_slice().expect("contiguous");
        for s in 0..b {
            let r = s * per..(s + 1) * per;
            let next = match *step {
                ReverseStep::Ddpm { t } => {
                    let z = (t > 0).then(|| noise_stream(cfg.seed, s as u64, k as u64 + 1, per));
                    ddpm_step(&xs[r.clone()], t, &es[r.clone()], sched, z.as_deref())?
                }
                ReverseStep::Ddim { t, prev } => ddim_step(&xs[r.clone()], t, prev, &es[r.clone()], sched)?,
            };
            xs[r].copy_from_slice(&next);
        }
    }
    let samples = (0..b)
        .map(|s| x.slice(ndarray::s![s * len..(s + 1) * len, ..]).to_owned())
        .collect();
    Ok(SampleBatch { samples, calls_per_sample: plan.len() })
}
