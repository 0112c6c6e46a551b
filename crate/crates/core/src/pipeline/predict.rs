use ndarray::Array2;

use super::features::encode_means;
use super::train::{DiffusionModel, VaeModel};
use crate::diffusion::{decode_future_memory, hybrid_sample, DenoiserModel, NoiseSchedule, SamplerConfig};
use crate::error::{Error, Result};
use crate::geom::{FrameTag, Panorama, Trajectory, HORIZON, POSE_DIM};
use crate::metrics::{best_of_1, best_of_n, smoothness, CollisionConfig, CollisionIndex};
use crate::scene::{mix_seed, Dataset, DatasetRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct RecordPrediction {
    pub record_id: u32,
    /// Denormalized ego-frame futures, stamped like the ground-truth future.
    pub samples: Vec<Trajectory>,
    pub calls_per_sample: u32,
    /// Decoded future visual memory of the first sample, one per step; empty when not requested.
    pub panoramas: Vec<Panorama>,
}

/// Samples one record. The sampler seed is mixed with the record id so records draw independent noise.
pub fn predict_record(
    diff: &DiffusionModel,
    vae: &VaeModel,
    sched: &NoiseSchedule,
    record: &DatasetRecord,
    record_id: u32,
    sampler: &SamplerConfig,
    decode: bool,
) -> Result<RecordPrediction> {
    let vm = encode_means(&vae.vae, &vae.params, &[&record.vm])?.row(0).to_vec();
    let cond = diff.condition(record, &vm)?;
    let cond = Array2::from_shape_vec((1, cond.len()), cond).expect("row vector");
    let cfg = SamplerConfig { seed: mix_seed(&[sampler.seed, record_id as u64]), ..*sampler };
    let model = DenoiserModel { net: &diff.net, params: &diff.params };
    let batch = hybrid_sample(&model, &cond, (HORIZON, diff.net.cfg.feature_width()), sched, &cfg)?;
    let t0 = record.future.poses.first().map_or(0.0, |p| p.t_s);
    let mut samples = Vec::with_capacity(batch.samples.len());
    let mut first_seq = None;
    for mut seq in batch.samples {
        diff.seq_norm.denormalize(seq.as_slice_mut().expect("standard"));
        if seq.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sampled sequence for record {record_id} is not finite")));
        }
        let feats: Vec<[f64; POSE_DIM]> =
            seq.rows().into_iter().map(|r| std::array::from_fn(|k| r[k])).collect();
        samples.push(Trajectory::from_features(&feats, t0, FrameTag::Ego));
        first_seq.get_or_insert(seq);
    }
    let panoramas = match (decode, first_seq) {
        (true, Some(seq)) => decode_future_memory(&seq, &vae.vae, &vae.params)?,
        _ => Vec::new(),
    };
    Ok(RecordPrediction { record_id, samples, calls_per_sample: batch.calls_per_sample as u32, panoramas })
}

pub fn sample_records(
    ds: &Dataset,
    ids: &[u32],
    diff: &DiffusionModel,
    vae: &VaeModel,
    sampler: &SamplerConfig,
    decode: bool,
) -> Result<Vec<RecordPrediction>> {
    let sched = diff.schedule();
    ids.iter()
        .map(|&id| {
            let record = ds
                .records
                .get(id as usize)
                .ok_or_else(|| Error::Index(format!("record {id} not in a dataset of {}", ds.records.len())))?;
            predict_record(diff, vae, &sched, record, id, sampler, decode)
        })
        .collect()
}

/// Per-record metrics. Collision and smoothness are averaged over the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub record_id: Option<u32>,
    pub collision: f64,
    pub smoothness: f64,
    pub best_of_1: f64,
    pub best_of_n: f64,
}

/// Scores predictions against their records, colliding against the re-projected visual memory.
pub fn evaluate(preds: &[RecordPrediction], ds: &Dataset, cfg: &CollisionConfig) -> Result<Vec<EvalRow>> {
    preds
        .iter()
        .map(|p| {
            let record = ds.records.get(p.record_id as usize).ok_or_else(|| {
                Error::Index(format!("prediction for record {} not in a dataset of {}", p.record_id, ds.records.len()))
            })?;
            if p.samples.is_empty() {
                return Err(Error::Domain(format!("record {} has no samples", p.record_id)));
            }
            let index = CollisionIndex::new(&record.vm.to_cloud(), cfg)?;
            let n = p.samples.len() as f64;
            let mut collision = 0.0;
            let mut smooth = 0.0;
            for s in &p.samples {
                collision += index.score_positions(&s.positions())? as f64;
                smooth += smoothness(s, &record.future)?;
            }
            Ok(EvalRow {
                record_id: Some(p.record_id),
                collision: collision / n,
                smoothness: smooth / n,
                best_of_1: best_of_1(&p.samples, &record.future)?,
                best_of_n: best_of_n(&p.samples, &record.future)?,
            })
        })
        .collect()
}

/// Arithmetic mean of every column.
pub fn mean_row(rows: &[EvalRow]) -> Result<EvalRow> {
    if rows.is_empty() {
        return Err(Error::Domain("no rows to aggregate".into()));
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(EvalRow {
        record_id: None,
        collision: mean(|r| r.collision),
        smoothness: mean(|r| r.smoothness),
        best_of_1: mean(|r| r.best_of_1),
        best_of_n: mean(|r| r.best_of_n),
    })
}
