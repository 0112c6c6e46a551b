//! Prediction container: magic `EGNVPRED`, version, config echo, then per record:
//! id, denoiser calls per sample, sampled trajectories, decoded panoramas.

use std::path::Path;

use super::binary::*;
use crate::error::{Error, Result};
use crate::pipeline::RecordPrediction;

pub const PREDICTIONS_MAGIC: &[u8; 8] = b"EGNVPRED";
pub const PREDICTIONS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    pub config_echo: String,
    pub records: Vec<RecordPrediction>,
}

pub fn encode_predictions(p: &PredictionFile) -> Vec<u8> {
    let mut w = Vec::new();
    write_header(&mut w, PREDICTIONS_MAGIC, PREDICTIONS_VERSION);
    put_str(&mut w, &p.config_echo);
    put_len(&mut w, p.records.len());
    for r in &p.records {
        put_u32(&mut w, r.record_id);
        put_u32(&mut w, r.calls_per_sample);
        put_len(&mut w, r.samples.len());
        for s in &r.samples {
            put_trajectory(&mut w, s);
        }
        put_len(&mut w, r.panoramas.len());
        for pano in &r.panoramas {
            put_panorama(&mut w, pano);
        }
    }
    w
}

pub fn decode_predictions(bytes: &[u8]) -> Result<PredictionFile> {
    let mut r = bytes;
    read_header(&mut r, PREDICTIONS_MAGIC, PREDICTIONS_VERSION)?;
    let config_echo = get_str(&mut r)?;
    let n = get_len(&mut r)?;
    let mut records = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let record_id = get_u32(&mut r)?;
        let calls_per_sample = get_u32(&mut r)?;
        let k = get_len(&mut r)?;
        let samples = (0..k).map(|_| get_trajectory(&mut r)).collect::<Result<_>>()?;
        let m = get_len(&mut r)?;
        let panoramas = (0..m).map(|_| get_panorama(&mut r)).collect::<Result<_>>()?;
        records.push(RecordPrediction { record_id, samples, calls_per_sample, panoramas });
    }
    if !r.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes in prediction file", r.len())));
    }
    Ok(PredictionFile { config_echo, records })
}

pub fn write_predictions(path: &Path, p: &PredictionFile) -> Result<()> {
    atomic_write(path, &encode_predictions(p))
}

pub fn read_predictions(path: &Path) -> Result<PredictionFile> {
    decode_predictions(&std::fs::read(path)?)
}
