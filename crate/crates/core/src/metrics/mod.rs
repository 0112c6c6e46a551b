//! Collision-free score, smoothness, best-of-N and sampler throughput.

mod bench;
mod collision;
mod kdtree;
mod motion;

pub use bench::{bench_sampler, BenchReport};
pub use collision::{brute_force_collision_score, collision_free_score, CollisionConfig, CollisionIndex};
pub use kdtree::{brute_force_knn, dist2, KdIndex};
pub use motion::{ade, best_of_1, best_of_n, smoothness, speeds_and_accels, SMOOTHNESS_EPS};
