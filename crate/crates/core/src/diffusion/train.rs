//! Noise-prediction training objective and decoding of sampled futures.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::geom::{Panorama, POSE_DIM};
use crate::nn::{vae_decode, Denoiser, ParamStore, Vae};

/// Mean Huber loss with threshold `delta`, and its gradient with respect to `pred`.
pub fn smooth_l1(pred: &[f64], target: &[f64], delta: f64) -> (f64, Vec<f64>) {
    let n = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let r = p - t;
            if r.abs() < delta {
                loss += 0.5 * r * r / delta;
                r / delta / n
            } else {
                loss += r.abs() - 0.5 * delta;
                r.signum() / n
            }
        })
        .collect();
    (loss / n, grad)
}

/// One forward/backward pass of the ε-prediction loss. Gradients accumulate into `ps`.
///
/// `x0` is `[B·L, F]` in normalized units, `cond` is `[B, C]`.
pub fn diffusion_train_step<R: Rng>(
    net: &Denoiser,
    ps: &mut ParamStore,
    x0: &Array2<f64>,
    cond: &Array2<f64>,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<f64> {
    let b = cond.nrows();
    if b == 0 || x0.nrows() % b != 0 {
        return Err(Error::Shape(format!("{} rows do not split into {b} sequences", x0.nrows())));
    }
    let per = x0.len() / b;
    let t: Vec<usize> = (0..b).map(|_| rng.gen_range(0..sched.steps())).collect();
    let eps: Vec<f64> = (0..x0.len()).map(|_| rng.sample(StandardNormal)).collect();
    let x0s = x0.as_standard_layout();
    let x0s = x0s.as_slice().expect("standard layout");
    let mut xt = Vec::with_capacity(x0.len());
    for s in 0..b {
        let r = s * per..(s + 1) * per;
        xt.extend(super::q_sample(&x0s[r.clone()], t[s], &eps[r], sched)?);
    }
    let xt = Array2::from_shape_vec(x0.dim(), xt).expect("same shape");
    let (pred, cache) = net.forward(ps, &xt, &t, cond)?;
    let (loss, grad) = smooth_l1(pred.as_slice().expect("standard layout"), &eps, 1.0);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("diffusion loss {loss} at steps {t:?}")));
    }
    let dy = Array2::from_shape_vec(pred.dim(), grad).expect("same shape");
    net.backward(ps, &cache, &dy);
    Ok(loss)
}

/// Decodes the latent columns of a denormalized `[L, POSE_DIM + latent]` sequence into one panorama per row.
pub fn decode_future_memory(seq: &Array2<f64>, vae: &Vae, ps: &ParamStore) -> Result<Vec<Panorama>> {
    if seq.ncols() != POSE_DIM + vae.cfg.latent {
        return Err(Error::Shape(format!(
            "sequence width {} does not hold {} latent channels",
            seq.ncols(),
            vae.cfg.latent
        )));
    }
    seq.rows()
        .into_iter()
        .map(|row| {
            let z: Vec<f64> = row.iter().skip(POSE_DIM).copied().collect();
            Ok(vae.logits_to_panorama(&vae_decode(&z, ps, vae)?))
        })
        .collect()
}
