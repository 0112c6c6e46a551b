//! Poses, frames, camera models and the projections between depth images,
//! point clouds and egocentric panoramas.

mod camera;
mod panorama;
mod pose;
mod semantic;
mod trajectory;

pub use camera::{
    optical_to_body, unproject_depth, CameraIntrinsics, CloudPoint, ColorImage, DepthImage, Image, PointCloud,
    SemanticImage,
};
pub use panorama::{panorama_project, Panorama, Projection};
pub use pose::{compose_pose, EgoFrame, Pose6D, STEP_S};
pub use semantic::{SemanticClass, NUM_CLASSES, PALETTE};
pub use trajectory::{from_ego_frame, to_ego_frame, unwrap_angle, FrameTag, Trajectory, HORIZON, POSE_DIM};

/// Default world gravity (m/s²).
pub const DEFAULT_GRAVITY: nalgebra::Vector3<f64> = nalgebra::Vector3::new(0.0, 0.0, -9.81);
