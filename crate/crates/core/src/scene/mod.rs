//! Procedural scenes, synthetic RGB-D rendering, simulated walkers and dataset assembly.

mod dataset;
mod layout;
mod render;
mod walker;

pub use dataset::{
    build_dataset, future_vm_steps, mix_seed, records_from_walk, replay_visual_memory, window_starts, Dataset,
    DatasetConfig, DatasetRecord, WINDOW,
};
pub use layout::{
    generate_scene, point_segment_distance, segment_segment_distance, Dimensions, GraphEdge, Scene, SceneSpec,
    Surface, Template, WaypointGraph, WALL_HEIGHT_M, WAYPOINT_CLEARANCE_M,
};
pub use render::{cast_ray, render_frame, sample_surface_cloud};
pub use walker::{simulate_walker, WalkerPrefs};
