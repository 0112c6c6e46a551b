use std::path::Path;

use super::binary::*;
use crate::error::{Error, Result};
use crate::geom::{FrameTag, HORIZON};
use crate::scene::{future_vm_steps, Dataset, DatasetRecord};

pub const DATASET_MAGIC: &[u8; 8] = b"EGNVDSET";
pub const DATASET_VERSION: u32 = 1;
pub const CHANNEL_ORDER: &str = "depth:f32,rgb:u8x3,semantic:u8";

/// Header: magic, version, record count, panorama width/height, future stride,
/// skipped walks, channel order. Then per record: scene id, walk index, window
/// start, past, future, visual memory, future panorama count and panoramas.
pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = Vec::new();
    write_header(&mut w, DATASET_MAGIC, DATASET_VERSION);
    put_len(&mut w, ds.records.len());
    put_len(&mut w, ds.pano_width);
    put_len(&mut w, ds.pano_height);
    put_len(&mut w, ds.future_vm_stride);
    put_len(&mut w, ds.skipped_walks);
    put_str(&mut w, CHANNEL_ORDER);
    for r in &ds.records {
        put_str(&mut w, &r.scene_id);
        put_u32(&mut w, r.walk_index);
        put_u32(&mut w, r.window_start_index);
        put_trajectory(&mut w, &r.past);
        put_trajectory(&mut w, &r.future);
        put_panorama(&mut w, &r.vm);
        put_len(&mut w, r.future_vm.len());
        for p in &r.future_vm {
            put_panorama(&mut w, p);
        }
    }
    w
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = bytes;
    read_header(&mut r, DATASET_MAGIC, DATASET_VERSION)?;
    let count = get_len(&mut r)?;
    let pano_width = get_len(&mut r)?;
    let pano_height = get_len(&mut r)?;
    let future_vm_stride = get_len(&mut r)?;
    let skipped_walks = get_len(&mut r)?;
    let order = get_str(&mut r)?;
    if order != CHANNEL_ORDER {
        return Err(Error::Format(format!("unsupported channel order {order:?}")));
    }
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let scene_id = get_str(&mut r)?;
        let walk_index = get_u32(&mut r)?;
        let window_start_index = get_u32(&mut r)?;
        let past = get_trajectory(&mut r)?;
        let future = get_trajectory(&mut r)?;
        let vm = get_panorama(&mut r)?;
        let n = get_len(&mut r)?;
        let future_vm = (0..n).map(|_| get_panorama(&mut r)).collect::<Result<_>>()?;
        records.push(DatasetRecord { scene_id, walk_index, window_start_index, past, future, vm, future_vm });
    }
    if !r.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after the last record", r.len())));
    }
    Ok(Dataset { records, pano_width, pano_height, future_vm_stride, skipped_walks })
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    atomic_write(path, &encode_dataset(ds))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&std::fs::read(path)?)
}

/// Every per-record invariant violation found in a decoded dataset.
pub fn dataset_violations(ds: &Dataset) -> Vec<String> {
    let mut out = Vec::new();
    let steps = future_vm_steps(ds.future_vm_stride).len();
    for (i, r) in ds.records.iter().enumerate() {
        let mut bad = |what: String| out.push(format!("record {i} ({} w{} s{}): {what}", r.scene_id, r.walk_index, r.window_start_index));
        for (name, t) in [("past", &r.past), ("future", &r.future)] {
            if t.len() != HORIZON {
                bad(format!("{name} has {} poses", t.len()));
            }
            if t.frame != FrameTag::Ego {
                bad(format!("{name} is not in the ego frame"));
            }
            if let Err(e) = t.validate() {
                bad(format!("{name}: {e}"));
            }
        }
        if let (Some(a), Some(b)) = (r.past.poses.last(), r.future.poses.first()) {
            if (b.t_s - a.t_s - crate::geom::STEP_S).abs() > 1e-9 {
                bad("future does not follow the past on the 20 Hz grid".into());
            }
            if a.position.norm() > 1e-9 {
                bad("last past pose is not the ego origin".into());
            }
        }
        if r.future_vm.len() != steps {
            bad(format!("{} future panoramas, expected {steps}", r.future_vm.len()));
        }
        for (k, p) in std::iter::once(&r.vm).chain(&r.future_vm).enumerate() {
            if (p.width, p.height) != (ds.pano_width, ds.pano_height) {
                bad(format!("panorama {k} is {}x{}", p.width, p.height));
            }
            if let Err(e) = p.validate() {
                bad(format!("panorama {k}: {e}"));
            }
        }
    }
    out
}

/// Decodes a dataset file and lists its invariant violations.
pub fn validate_dataset_file(path: &Path) -> Result<(usize, Vec<String>)> {
    let ds = read_dataset(path)?;
    Ok((ds.records.len(), dataset_violations(&ds)))
}
