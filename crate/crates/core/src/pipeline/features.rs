//! Record → model tensors: latents, normalized sequences and condition vectors.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geom::{Panorama, HORIZON, POSE_DIM};
use crate::nn::{past_condition, NormStats, ParamStore, Vae};
use crate::scene::{future_vm_steps, DatasetRecord};

use super::Conditioning;

const ENCODE_CHUNK: usize = 256;

/// Posterior means for a list of panoramas, one row each.
pub fn encode_means(vae: &Vae, ps: &ParamStore, panos: &[&Panorama]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((panos.len(), vae.cfg.latent));
    for (c, chunk) in panos.chunks(ENCODE_CHUNK).enumerate() {
        let (mu, _, _) = vae.encode(ps, &vae.batch_input(chunk)?);
        out.slice_mut(ndarray::s![c * ENCODE_CHUNK..c * ENCODE_CHUNK + chunk.len(), ..]).assign(&mu);
    }
    Ok(out)
}

/// Latent means of one record: the current visual memory and each stored future panorama.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedRecord {
    pub vm: Vec<f64>,
    pub future: Vec<Vec<f64>>,
}

pub fn encode_records(vae: &Vae, ps: &ParamStore, records: &[&DatasetRecord]) -> Result<Vec<EncodedRecord>> {
    let panos: Vec<&Panorama> = records.iter().flat_map(|r| std::iter::once(&r.vm).chain(&r.future_vm)).collect();
    let mu = encode_means(vae, ps, &panos)?;
    let mut row = 0;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let vm = mu.row(row).to_vec();
        let future = (0..r.future_vm.len()).map(|k| mu.row(row + 1 + k).to_vec()).collect();
        row += 1 + r.future_vm.len();
        out.push(EncodedRecord { vm, future });
    }
    Ok(out)
}

/// Piecewise-linear latent track over the horizon through the stored future steps.
pub fn interpolate_latents(stride: usize, keyed: &[Vec<f64>], latent: usize) -> Result<Vec<Vec<f64>>> {
    let steps = future_vm_steps(stride);
    if keyed.len() != steps.len() {
        return Err(Error::Shape(format!("{} future latents for {} keyed steps", keyed.len(), steps.len())));
    }
    if steps.is_empty() {
        return Ok(vec![vec![0.0; latent]; HORIZON]);
    }
    let mut out = Vec::with_capacity(HORIZON);
    let mut seg = 0;
    for j in 0..HORIZON {
        while seg + 1 < steps.len() - 1 && steps[seg + 1] <= j {
            seg += 1;
        }
        if steps.len() == 1 {
            out.push(keyed[0].clone());
            continue;
        }
        let (a, b) = (steps[seg], steps[seg + 1]);
        let w = ((j as f64 - a as f64) / (b - a) as f64).clamp(0.0, 1.0);
        out.push(keyed[seg].iter().zip(&keyed[seg + 1]).map(|(x, y)| x + w * (y - x)).collect());
    }
    Ok(out)
}

/// Raw (unnormalized) `[HORIZON, POSE_DIM + latent]` target sequence of a record.
pub fn raw_sequence(record: &DatasetRecord, enc: &EncodedRecord, stride: usize, conditioning: Conditioning) -> Result<Array2<f64>> {
    let latent = enc.vm.len();
    let feats = record.future.features();
    if feats.len() != HORIZON {
        return Err(Error::Shape(format!("future of {} steps", feats.len())));
    }
    let lats = interpolate_latents(stride, &enc.future, latent)?;
    let mut seq = Array2::zeros((HORIZON, POSE_DIM + latent));
    for j in 0..HORIZON {
        for k in 0..POSE_DIM {
            seq[[j, k]] = feats[j][k];
        }
        if conditioning.uses_visual() {
            for k in 0..latent {
                seq[[j, POSE_DIM + k]] = lats[j][k];
            }
        }
    }
    Ok(seq)
}

/// Condition vector: normalized past poses (right-aligned) then the normalized current latent.
pub fn condition_vector(
    record: &DatasetRecord,
    vm_latent: &[f64],
    past_norm: &NormStats,
    seq_norm: &NormStats,
    past_len: usize,
    conditioning: Conditioning,
) -> Result<Vec<f64>> {
    let mut past = record.past.features();
    for row in past.iter_mut() {
        past_norm.normalize(row);
    }
    let keep = matches!(conditioning, Conditioning::Markovian).then_some(3);
    let mut cond = past_condition(&past, past_len, keep)?;
    if conditioning.uses_visual() {
        let mut z = vm_latent.to_vec();
        for (k, v) in z.iter_mut().enumerate() {
            *v = (*v - seq_norm.mean[POSE_DIM + k]) / seq_norm.std[POSE_DIM + k];
        }
        cond.extend(z);
    } else {
        cond.extend(std::iter::repeat(0.0).take(vm_latent.len()));
    }
    Ok(cond)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_track_hits_keys_and_interpolates() {
        let keys: Vec<Vec<f64>> = future_vm_steps(10).iter().map(|&s| vec![s as f64, -(s as f64)]).collect();
        let track = interpolate_latents(10, &keys, 2).unwrap();
        assert_eq!(track.len(), HORIZON);
        // Keys are linear in the step index, so the track reproduces it everywhere.
        for (j, z) in track.iter().enumerate() {
            assert!((z[0] - j as f64).abs() < 1e-12 && (z[1] + j as f64).abs() < 1e-12, "{j}: {z:?}");
        }
        assert_eq!(interpolate_latents(0, &[], 3).unwrap()[50], vec![0.0; 3]);
        assert!(interpolate_latents(10, &keys[..3], 2).is_err());
    }
}
