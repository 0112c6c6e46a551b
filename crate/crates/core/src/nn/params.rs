use std::collections::BTreeMap;

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Handle into a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named float64 parameters in one flat buffer, with a gradient slot of the same layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub offsets: Vec<usize>,
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn count(&self) -> usize {
        self.names.len()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], mut init: impl FnMut() -> f64) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let size: usize = shape.iter().product();
        let id = ParamId(self.names.len());
        self.names.push(name.to_string());
        self.shapes.push(shape.to_vec());
        self.offsets.push(self.values.len());
        self.values.extend((0..size).map(|_| init()));
        self.grads.resize(self.values.len(), 0.0);
        self.index.insert(name.to_string(), id);
        id
    }

    /// Gaussian init with standard deviation `scale / sqrt(fan_in)`.
    pub fn add_normal<R: Rng>(&mut self, name: &str, shape: &[usize], fan_in: usize, scale: f64, rng: &mut R) -> ParamId {
        let std = scale / (fan_in.max(1) as f64).sqrt();
        self.add(name, shape, || std * rng.sample::<f64, _>(StandardNormal))
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add(name, shape, || 0.0)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    fn range(&self, id: ParamId) -> std::ops::Range<usize> {
        let start = self.offsets[id.0];
        start..start + self.shapes[id.0].iter().product::<usize>()
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.values[self.range(id)]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        let r = self.range(id);
        &mut self.values[r]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[self.range(id)]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        let r = self.range(id);
        &mut self.grads[r]
    }

    pub fn matrix(&self, id: ParamId) -> ArrayView2<'_, f64> {
        let s = &self.shapes[id.0];
        ArrayView2::from_shape((s[0], s[1]), self.value(id)).expect("parameter is not a matrix")
    }

    pub fn vector(&self, id: ParamId) -> ArrayView1<'_, f64> {
        ArrayView1::from(self.value(id))
    }

    /// Adds `delta` into the gradient of `id`.
    pub fn accumulate<'a>(&mut self, id: ParamId, delta: impl IntoIterator<Item = &'a f64>) {
        for (g, d) in self.grad_mut(id).iter_mut().zip(delta) {
            *g += d;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale_grads(&mut self, s: f64) {
        self.grads.iter_mut().for_each(|g| *g *= s);
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Fails on the first parameter whose gradient holds NaN or ±inf.
    pub fn check_finite_grads(&self) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let g = self.grad(ParamId(i));
            if let Some(k) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name}[{k}] is {}", g[k])));
            }
        }
        Ok(())
    }

    /// Two stores have the same layout when names and shapes match in order.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.names == other.names && self.shapes == other.shapes
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

/// One bias-corrected Adam update from the gradients held in `params`.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::Shape(format!("optimizer state {} vs {} parameters", state.m.len(), params.len())));
    }
    params.check_finite_grads()?;
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for i in 0..params.values.len() {
        let g = params.grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params.values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Rescales gradients so their global norm is at most `max_norm`; returns the pre-clip norm.
pub fn clip_grad_norm(params: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm && norm.is_finite() {
        params.scale_grads(max_norm / norm);
    }
    norm
}

/// Gradients below this magnitude are indistinguishable from central-difference
/// roundoff at `h = 1e-5` for objectives of order 10.
pub const GRAD_ZERO_FLOOR: f64 = 1e-8;

/// Central-difference check of `analytic` (the gradient of `f` at the current
/// values) on `probes` random coordinates. Returns the largest relative error
/// `|a - n| / max(|a|, |n|)`. Coordinates where both are below
/// [`GRAD_ZERO_FLOOR`] count as agreeing.
pub fn grad_check<R: Rng>(
    params: &mut ParamStore,
    analytic: &[f64],
    mut f: impl FnMut(&ParamStore) -> f64,
    probes: usize,
    h: f64,
    rng: &mut R,
) -> f64 {
    assert!((1e-6..=1e-4).contains(&h), "step {h} outside [1e-6, 1e-4]");
    assert_eq!(analytic.len(), params.len());
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let i = rng.gen_range(0..params.len());
        let orig = params.values[i];
        params.values[i] = orig + h;
        let fp = f(params);
        params.values[i] = orig - h;
        let fm = f(params);
        params.values[i] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs());
        if scale >= GRAD_ZERO_FLOOR {
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}
