use std::collections::VecDeque;

use nalgebra::Vector3;

use super::edges::{trim_depth_edges, EdgeThresholds};
use crate::error::Result;
use crate::geom::{
    panorama_project, unproject_depth, CameraIntrinsics, ColorImage, DepthImage, EgoFrame, Panorama, PointCloud,
    Pose6D, SemanticImage,
};

/// A posed RGB-D frame with per-pixel semantics.
#[derive(Debug, Clone)]
pub struct Frame {
    pub pose: Pose6D,
    pub intrinsics: CameraIntrinsics,
    pub depth: DepthImage,
    pub color: ColorImage,
    pub semantic: SemanticImage,
}

#[derive(Debug, Clone)]
pub struct Keyframe {
    pub cam_pose: Pose6D,
    /// World-frame cloud after edge trimming.
    pub cloud: PointCloud,
    pub t_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryConfig {
    pub window_s: f64,
    pub min_rotation_rad: f64,
    pub min_translation_m: f64,
    pub edge_thresholds: EdgeThresholds,
    pub dilate_px: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            window_s: 5.0,
            min_rotation_rad: 15f64.to_radians(),
            min_translation_m: 1.0,
            edge_thresholds: EdgeThresholds::default(),
            dilate_px: 3,
        }
    }
}

/// Rolling window of keyframes, each stored with its own cloud so eviction is per keyframe.
#[derive(Debug, Clone)]
pub struct MemoryBuffer {
    pub config: MemoryConfig,
    pub keyframes: VecDeque<Keyframe>,
    pub last_kept_pose: Option<Pose6D>,
}

impl MemoryBuffer {
    pub fn new(config: MemoryConfig) -> Self {
        Self {
            config,
            keyframes: VecDeque::new(),
            last_kept_pose: None,
        }
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    /// Drops keyframes older than `now_s - window_s`.
    pub fn evict(&mut self, now_s: f64) {
        let cutoff = now_s - self.config.window_s;
        while self.keyframes.front().is_some_and(|k| k.t_s < cutoff) {
            self.keyframes.pop_front();
        }
    }

    /// Keyframe policy: keep when the buffer is empty or the camera rotated
    /// more than the angular threshold or translated more than the distance
    /// threshold since the last kept frame.
    pub fn should_keep(&self, pose: &Pose6D) -> bool {
        match (&self.last_kept_pose, self.keyframes.is_empty()) {
            (_, true) | (None, _) => true,
            (Some(last), false) => {
                last.geodesic_angle(pose) > self.config.min_rotation_rad
                    || (last.position - pose.position).norm() > self.config.min_translation_m
            }
        }
    }

    /// Trims, unprojects and appends a frame without consulting the policy.
    pub fn insert(&mut self, frame: &Frame, now_s: f64) -> Result<()> {
        let trimmed = trim_depth_edges(&frame.depth, self.config.edge_thresholds, self.config.dilate_px)?;
        let cloud = unproject_depth(&trimmed, &frame.intrinsics, &frame.pose, &frame.color, &frame.semantic)?;
        self.keyframes.push_back(Keyframe {
            cam_pose: frame.pose,
            cloud,
            t_s: now_s,
        });
        self.last_kept_pose = Some(frame.pose);
        Ok(())
    }

    /// Evicts stale keyframes, then keeps `frame` if the policy asks for it.
    /// Returns whether the frame was kept.
    pub fn keyframe_update(&mut self, frame: &Frame, now_s: f64) -> Result<bool> {
        frame.pose.check_unit()?;
        self.evict(now_s);
        let keep = self.should_keep(&frame.pose);
        if keep {
            self.insert(frame, now_s)?;
        }
        Ok(keep)
    }

    /// Stitches every buffered cloud into the egocentric panorama of `current`,
    /// dropping points farther than `max_range_m` from the current position.
    pub fn build_visual_memory(
        &self,
        current: &Pose6D,
        gravity: &Vector3<f64>,
        max_range_m: f64,
        width: usize,
        height: usize,
    ) -> Result<Panorama> {
        let ego = EgoFrame::new(current, gravity)?;
        let mut merged = PointCloud::default();
        for kf in &self.keyframes {
            merged.points.extend(
                kf.cloud
                    .points
                    .iter()
                    .filter(|p| (p.position - current.position).norm() <= max_range_m),
            );
        }
        Ok(panorama_project(&merged, &ego, width, height)?.panorama)
    }
}
