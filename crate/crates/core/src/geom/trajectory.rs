use nalgebra::Vector3;

use super::pose::{EgoFrame, Pose6D, STEP_S};
use crate::error::{Error, Result};

/// Number of past and of future steps in a model window (5 s at 20 Hz).
pub const HORIZON: usize = 100;

/// Width of the per-step pose feature: x, y, z, yaw, pitch, roll.
pub const POSE_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameTag {
    World,
    Ego,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<Pose6D>,
    pub frame: FrameTag,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose6D>, frame: FrameTag) -> Self {
        Self { poses, frame }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.position).collect()
    }

    pub fn slice(&self, start: usize, end: usize) -> Trajectory {
        Trajectory::new(self.poses[start..end].to_vec(), self.frame)
    }

    /// Checks unit quaternions and the 20 Hz timestamp grid.
    pub fn validate(&self) -> Result<()> {
        for p in &self.poses {
            p.check_unit()?;
            let n = p.orientation.norm();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidPose(format!("quaternion norm {n} at t={}", p.t_s)));
            }
        }
        for w in self.poses.windows(2) {
            let dt = w[1].t_s - w[0].t_s;
            if (dt - STEP_S).abs() > 1e-9 {
                return Err(Error::InvalidPose(format!(
                    "timestamp step {dt} between t={} and t={}",
                    w[0].t_s, w[1].t_s
                )));
            }
        }
        Ok(())
    }

    /// Per-step 6-D features (position, unwrapped yaw/pitch/roll).
    pub fn features(&self) -> Vec<[f64; POSE_DIM]> {
        let mut out: Vec<[f64; POSE_DIM]> = Vec::with_capacity(self.len());
        for p in &self.poses {
            let (yaw, pitch, roll) = p.yaw_pitch_roll();
            let mut f = [p.position.x, p.position.y, p.position.z, yaw, pitch, roll];
            if let Some(prev) = out.last() {
                for k in 3..6 {
                    f[k] = unwrap_angle(prev[k], f[k]);
                }
            }
            out.push(f);
        }
        out
    }

    /// Inverse of [`Trajectory::features`], stamping poses from `t0_s` at 20 Hz.
    pub fn from_features(features: &[[f64; POSE_DIM]], t0_s: f64, frame: FrameTag) -> Self {
        let poses = features
            .iter()
            .enumerate()
            .map(|(i, f)| {
                Pose6D::from_yaw_pitch_roll(
                    t0_s + i as f64 * STEP_S,
                    Vector3::new(f[0], f[1], f[2]),
                    f[3],
                    f[4],
                    f[5],
                )
            })
            .collect();
        Self::new(poses, frame)
    }
}

/// Returns the representative of `angle` closest to `reference`.
pub fn unwrap_angle(reference: f64, angle: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    angle + two_pi * ((reference - angle) / two_pi).round()
}

/// Expresses a world-frame trajectory in the ego frame anchored at `reference`.
pub fn to_ego_frame(traj: &Trajectory, reference: &Pose6D, gravity: &Vector3<f64>) -> Result<Trajectory> {
    if traj.frame != FrameTag::World {
        return Err(Error::Contract("to_ego_frame expects a world-frame trajectory".into()));
    }
    let frame = EgoFrame::new(reference, gravity)?;
    Ok(Trajectory::new(
        traj.poses.iter().map(|p| frame.world_to_ego(p)).collect(),
        FrameTag::Ego,
    ))
}

/// Maps an ego-frame trajectory back to the world frame.
pub fn from_ego_frame(traj: &Trajectory, reference: &Pose6D, gravity: &Vector3<f64>) -> Result<Trajectory> {
    if traj.frame != FrameTag::Ego {
        return Err(Error::Contract("from_ego_frame expects an ego-frame trajectory".into()));
    }
    let frame = EgoFrame::new(reference, gravity)?;
    Ok(Trajectory::new(
        traj.poses.iter().map(|p| frame.ego_to_world(p)).collect(),
        FrameTag::World,
    ))
}
