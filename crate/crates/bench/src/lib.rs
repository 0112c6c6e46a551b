//! Shared fixtures for the kernel benchmarks.

use egonav::geom::{PointCloud, HORIZON};
use egonav::ndarray::Array2;
use egonav::nn::{Denoiser, DenoiserConfig, ParamStore};
use egonav::scene::{generate_scene, sample_surface_cloud, SceneSpec, Template};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Surface cloud of a room scene at 5 cm spacing.
pub fn room_cloud() -> PointCloud {
    let scene = generate_scene(&SceneSpec::new(Template::RoomWithObstacles, 1)).expect("default room spec is valid");
    sample_surface_cloud(&scene, 0.05)
}

/// A randomly initialised default-width denoiser with a batch-1 input and condition.
pub fn denoiser() -> (Denoiser, ParamStore, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ps = ParamStore::new();
    let cfg = DenoiserConfig::default();
    let net = Denoiser::new(cfg, &mut ps, "bench", &mut rng).expect("default denoiser config is valid");
    let x = Array2::from_shape_fn((HORIZON, cfg.feature_width()), |(i, j)| ((i * 7 + j) % 13) as f64 / 13.0 - 0.5);
    let cond = Array2::from_shape_fn((1, cfg.cond_width()), |(_, j)| (j % 5) as f64 / 5.0);
    (net, ps, x, cond)
}
