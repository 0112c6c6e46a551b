//! Overlapping-window dataset records built from simulated walks.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;

use super::layout::{generate_scene, Scene, SceneSpec};
use super::render::render_frame;
use super::walker::{simulate_walker, WalkerPrefs};
use crate::error::{Error, Result};
use crate::geom::{to_ego_frame, CameraIntrinsics, Panorama, Trajectory, DEFAULT_GRAVITY, HORIZON};
use crate::memory::{Frame, MemoryBuffer, MemoryConfig, DEFAULT_MAX_RANGE_M};

/// Steps per record: past plus future.
pub const WINDOW: usize = 2 * HORIZON;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub walks_per_scene: usize,
    pub stride_steps: usize,
    pub seed: u64,
    pub pano_width: usize,
    pub pano_height: usize,
    pub max_range_m: f64,
    /// Spacing of the future panoramas kept for latent supervision; 0 disables them.
    pub future_vm_stride: usize,
    pub intrinsics: CameraIntrinsics,
    pub memory: MemoryConfig,
    pub walker: WalkerPrefs,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            walks_per_scene: 4,
            stride_steps: 10,
            seed: 0,
            pano_width: 96,
            pano_height: 32,
            max_range_m: DEFAULT_MAX_RANGE_M,
            future_vm_stride: 10,
            intrinsics: CameraIntrinsics::desk_default(),
            memory: MemoryConfig::default(),
            walker: WalkerPrefs::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub scene_id: String,
    pub walk_index: u32,
    pub window_start_index: u32,
    /// Steps `s .. s+100` of the walk in the ego frame of the last past pose.
    pub past: Trajectory,
    /// Steps `s+100 .. s+200` in the same ego frame.
    pub future: Trajectory,
    /// Visual memory at the last past step.
    pub vm: Panorama,
    /// Visual memory at the future steps listed by [`future_vm_steps`].
    pub future_vm: Vec<Panorama>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
    pub pano_width: usize,
    pub pano_height: usize,
    pub future_vm_stride: usize,
    pub skipped_walks: usize,
}

impl Dataset {
    /// Record counts per scene template, keyed by the template prefix of `scene_id`.
    pub fn template_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            let template = r.scene_id.rsplit_once('-').map_or(r.scene_id.as_str(), |(t, _)| t);
            *out.entry(template.to_string()).or_default() += 1;
        }
        out
    }
}

/// Future step offsets (0-based within the future horizon) that carry a stored panorama.
pub fn future_vm_steps(stride: usize) -> Vec<usize> {
    if stride == 0 {
        return Vec::new();
    }
    let mut steps: Vec<usize> = (0..HORIZON).step_by(stride).collect();
    if *steps.last().unwrap() != HORIZON - 1 {
        steps.push(HORIZON - 1);
    }
    steps
}

/// Window starts for a walk of `len` steps.
pub fn window_starts(len: usize, stride: usize) -> Vec<usize> {
    if len < WINDOW || stride == 0 {
        return Vec::new();
    }
    (0..=len - WINDOW).step_by(stride).collect()
}

/// Mixes seed components into an independent 64-bit stream id.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Runs the camera along `traj` and returns the visual memory at every index in `needed`.
///
/// Frames are consumed in time order, so the panorama for step k depends only on frames 0..=k.
pub fn replay_visual_memory(
    scene: &Scene,
    traj: &Trajectory,
    needed: &BTreeSet<usize>,
    cfg: &DatasetConfig,
) -> Result<BTreeMap<usize, Panorama>> {
    let mut out = BTreeMap::new();
    let Some(&last) = needed.iter().next_back() else {
        return Ok(out);
    };
    if last >= traj.len() {
        return Err(Error::Index(format!("step {last} beyond walk of {} steps", traj.len())));
    }
    let mut buffer = MemoryBuffer::new(cfg.memory);
    for (k, pose) in traj.poses.iter().enumerate().take(last + 1) {
        buffer.evict(pose.t_s);
        if buffer.should_keep(pose) {
            let (depth, color, semantic) = render_frame(scene, pose, &cfg.intrinsics);
            let frame = Frame {
                pose: *pose,
                intrinsics: cfg.intrinsics,
                depth,
                color,
                semantic,
            };
            buffer.insert(&frame, pose.t_s)?;
        }
        if needed.contains(&k) {
            let vm = buffer.build_visual_memory(pose, &DEFAULT_GRAVITY, cfg.max_range_m, cfg.pano_width, cfg.pano_height)?;
            out.insert(k, vm);
        }
    }
    Ok(out)
}

/// Splits one walk into records.
pub fn records_from_walk(
    scene: &Scene,
    walk: &Trajectory,
    walk_index: u32,
    cfg: &DatasetConfig,
) -> Result<Vec<DatasetRecord>> {
    let starts = window_starts(walk.len(), cfg.stride_steps);
    let fsteps = future_vm_steps(cfg.future_vm_stride);
    let mut needed = BTreeSet::new();
    for &s in &starts {
        let pred = s + HORIZON - 1;
        needed.insert(pred);
        needed.extend(fsteps.iter().map(|j| pred + 1 + j));
    }
    let vms = replay_visual_memory(scene, walk, &needed, cfg)?;
    let gravity: Vector3<f64> = DEFAULT_GRAVITY;
    let mut out = Vec::with_capacity(starts.len());
    for s in starts {
        let pred = s + HORIZON - 1;
        let reference = walk.poses[pred];
        out.push(DatasetRecord {
            scene_id: scene.id(),
            walk_index,
            window_start_index: s as u32,
            past: to_ego_frame(&walk.slice(s, pred + 1), &reference, &gravity)?,
            future: to_ego_frame(&walk.slice(pred + 1, s + WINDOW), &reference, &gravity)?,
            vm: vms[&pred].clone(),
            future_vm: fsteps.iter().map(|j| vms[&(pred + 1 + j)].clone()).collect(),
        });
    }
    Ok(out)
}

/// Simulates `walks_per_scene` walks in every scene and slices them into records.
/// Walks shorter than one window, or with no feasible route, are counted in
/// `skipped_walks`.
pub fn build_dataset(specs: &[SceneSpec], cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.stride_steps == 0 {
        return Err(Error::Config("stride_steps must be at least 1".into()));
    }
    let mut records = Vec::new();
    let mut skipped = 0;
    for (si, spec) in specs.iter().enumerate() {
        let scene = generate_scene(spec)?;
        for w in 0..cfg.walks_per_scene {
            let walk_seed = mix_seed(&[cfg.seed, si as u64, w as u64]);
            let walk = match simulate_walker(&scene, scene.start, &scene.exits, &cfg.walker, walk_seed) {
                Ok(walk) => walk,
                Err(Error::Path(msg)) => {
                    log::warn!("{}: walk {w} skipped: {msg}", scene.id());
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if walk.len() < WINDOW {
                log::warn!("{}: walk {w} has {} steps, fewer than {WINDOW}", scene.id(), walk.len());
                skipped += 1;
                continue;
            }
            records.extend(records_from_walk(&scene, &walk, w as u32, cfg)?);
        }
    }
    Ok(Dataset {
        records,
        pano_width: cfg.pano_width,
        pano_height: cfg.pano_height,
        future_vm_stride: cfg.future_vm_stride,
        skipped_walks: skipped,
    })
}
