//! Checkpoint container: magic `EGNVCKPT`, version, stage tag, step, config echo,
//! stage configuration, parameters (name, shape, values), Adam moments.

use std::path::Path;

use super::binary::*;
use crate::error::{Error, Result};
use crate::nn::{AdamState, DenoiserConfig, NormStats, ParamStore, VaeConfig};
use crate::pipeline::{Conditioning, DiffusionModel, VaeModel};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EGNVCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const STAGE_VAE: u8 = 0;
const STAGE_DIFFUSION: u8 = 1;

fn put_params(w: &mut Vec<u8>, ps: &ParamStore, adam: &AdamState) {
    put_len(w, ps.count());
    for i in 0..ps.count() {
        put_str(w, &ps.names[i]);
        put_len(w, ps.shapes[i].len());
        for &d in &ps.shapes[i] {
            put_len(w, d);
        }
        let size: usize = ps.shapes[i].iter().product();
        put_f64s(w, &ps.values[ps.offsets[i]..ps.offsets[i] + size]);
    }
    put_u64(w, adam.step);
    put_f64s(w, &adam.m);
    put_f64s(w, &adam.v);
}

fn get_params(r: &mut &[u8]) -> Result<(ParamStore, AdamState)> {
    let n = get_len(r)?;
    let mut ps = ParamStore::new();
    for _ in 0..n {
        let name = get_str(r)?;
        let dims = get_len(r)?;
        let shape: Vec<usize> = (0..dims).map(|_| get_len(r)).collect::<Result<_>>()?;
        let values = get_f64s(r)?;
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::Format(format!("parameter {name} holds {} values for shape {shape:?}", values.len())));
        }
        let mut it = values.into_iter();
        ps.add(&name, &shape, || it.next().expect("sized above"));
    }
    let step = get_u64(r)?;
    let m = get_f64s(r)?;
    let v = get_f64s(r)?;
    if m.len() != ps.len() || v.len() != ps.len() {
        return Err(Error::Format("optimizer moments do not match the parameters".into()));
    }
    Ok((ps, AdamState { m, v, step }))
}

fn put_vae_config(w: &mut Vec<u8>, c: &VaeConfig) {
    for v in [c.width, c.height, c.hidden, c.latent] {
        put_len(w, v);
    }
    put_f64(w, c.max_range_m);
    put_u8(w, c.use_semantic as u8);
}

fn get_vae_config(r: &mut &[u8]) -> Result<VaeConfig> {
    Ok(VaeConfig {
        width: get_len(r)?,
        height: get_len(r)?,
        hidden: get_len(r)?,
        latent: get_len(r)?,
        max_range_m: get_f64(r)?,
        use_semantic: get_u8(r)? != 0,
    })
}

fn put_norm(w: &mut Vec<u8>, n: &NormStats) {
    put_f64s(w, &n.mean);
    put_f64s(w, &n.std);
}

fn get_norm(r: &mut &[u8]) -> Result<NormStats> {
    let mean = get_f64s(r)?;
    let std = get_f64s(r)?;
    if mean.len() != std.len() {
        return Err(Error::Format("normalization mean and std differ in width".into()));
    }
    Ok(NormStats { mean, std })
}

fn open(bytes: &[u8], stage: u8) -> Result<(&[u8], u64, String)> {
    let mut r = bytes;
    read_header(&mut r, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let got = get_u8(&mut r)?;
    if got != stage {
        let name = |s| if s == STAGE_VAE { "vae" } else { "diffusion" };
        return Err(Error::Format(format!("checkpoint holds a {} stage, expected {}", name(got), name(stage))));
    }
    let step = get_u64(&mut r)?;
    let echo = get_str(&mut r)?;
    Ok((r, step, echo))
}

fn finish(r: &[u8]) -> Result<()> {
    if r.is_empty() {
        Ok(())
    } else {
        Err(Error::Format(format!("{} trailing checkpoint bytes", r.len())))
    }
}

pub fn encode_vae_checkpoint(m: &VaeModel, config_echo: &str) -> Vec<u8> {
    let mut w = Vec::new();
    write_header(&mut w, CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    put_u8(&mut w, STAGE_VAE);
    put_u64(&mut w, m.step);
    put_str(&mut w, config_echo);
    put_vae_config(&mut w, &m.vae.cfg);
    put_params(&mut w, &m.params, &m.adam);
    w
}

/// Returns the model and the echoed run configuration.
pub fn decode_vae_checkpoint(bytes: &[u8]) -> Result<(VaeModel, String)> {
    let (mut r, step, echo) = open(bytes, STAGE_VAE)?;
    let cfg = get_vae_config(&mut r)?;
    let (ps, adam) = get_params(&mut r)?;
    finish(r)?;
    Ok((VaeModel::from_parts(cfg, ps, adam, step)?, echo))
}

pub fn encode_diffusion_checkpoint(m: &DiffusionModel, config_echo: &str) -> Vec<u8> {
    let mut w = Vec::new();
    write_header(&mut w, CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    put_u8(&mut w, STAGE_DIFFUSION);
    put_u64(&mut w, m.step);
    put_str(&mut w, config_echo);
    let c = &m.net.cfg;
    for v in [c.seq_len, c.pose_dim, c.latent_dim, c.past_len, c.base_channels, c.heads, c.time_dim, c.emb_dim, c.timesteps] {
        put_len(&mut w, v);
    }
    put_u8(&mut w, m.conditioning.code());
    put_f64(&mut w, m.beta_start);
    put_f64(&mut w, m.beta_end);
    put_len(&mut w, m.future_vm_stride);
    put_norm(&mut w, &m.seq_norm);
    put_norm(&mut w, &m.past_norm);
    put_params(&mut w, &m.params, &m.adam);
    w
}

pub fn decode_diffusion_checkpoint(bytes: &[u8]) -> Result<(DiffusionModel, String)> {
    let (mut r, step, echo) = open(bytes, STAGE_DIFFUSION)?;
    let mut dims = [0usize; 9];
    for d in dims.iter_mut() {
        *d = get_len(&mut r)?;
    }
    let [seq_len, pose_dim, latent_dim, past_len, base_channels, heads, time_dim, emb_dim, timesteps] = dims;
    let cfg = DenoiserConfig { seq_len, pose_dim, latent_dim, past_len, base_channels, heads, time_dim, emb_dim, timesteps };
    let conditioning = Conditioning::from_code(get_u8(&mut r)?)?;
    let betas = (get_f64(&mut r)?, get_f64(&mut r)?);
    let stride = get_len(&mut r)?;
    let norms = (get_norm(&mut r)?, get_norm(&mut r)?);
    let (ps, adam) = get_params(&mut r)?;
    finish(r)?;
    let m = DiffusionModel::from_parts(cfg, conditioning, betas, stride, norms, Some(ps), Some(adam), step, 0)?;
    Ok((m, echo))
}

pub fn write_vae_checkpoint(path: &Path, m: &VaeModel, config_echo: &str) -> Result<()> {
    atomic_write(path, &encode_vae_checkpoint(m, config_echo))
}

pub fn read_vae_checkpoint(path: &Path) -> Result<(VaeModel, String)> {
    decode_vae_checkpoint(&std::fs::read(path)?)
}

pub fn write_diffusion_checkpoint(path: &Path, m: &DiffusionModel, config_echo: &str) -> Result<()> {
    atomic_write(path, &encode_diffusion_checkpoint(m, config_echo))
}

pub fn read_diffusion_checkpoint(path: &Path) -> Result<(DiffusionModel, String)> {
    decode_diffusion_checkpoint(&std::fs::read(path)?)
}
