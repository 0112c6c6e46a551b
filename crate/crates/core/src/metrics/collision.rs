use nalgebra::Vector3;

use super::kdtree::{dist2, KdIndex};
use crate::error::{Error, Result};
use crate::geom::{PointCloud, SemanticClass, Trajectory, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionConfig {
    pub radius_m: f64,
    /// A step collides when strictly more than this many points fall within the radius.
    pub point_threshold: usize,
    pub knn: usize,
    /// Indexed by class code.
    pub collidable: [bool; NUM_CLASSES],
}

impl Default for CollisionConfig {
    fn default() -> Self {
        let mut collidable = [false; NUM_CLASSES];
        for c in SemanticClass::ALL {
            collidable[c as usize] = c.is_collidable();
        }
        Self { radius_m: 0.16, point_threshold: 10, knn: 20, collidable }
    }
}

impl CollisionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m > 0.0) {
            return Err(Error::Config(format!("collision radius {} must be positive", self.radius_m)));
        }
        if self.knn < self.point_threshold {
            return Err(Error::Config(format!(
                "knn {} is below the point threshold {}",
                self.knn, self.point_threshold
            )));
        }
        Ok(())
    }

    pub fn filter(&self, cloud: &PointCloud) -> Vec<Vector3<f64>> {
        cloud
            .points
            .iter()
            .filter(|p| self.collidable[p.semantic as usize])
            .map(|p| p.position)
            .collect()
    }
}

/// Collidable points of one cloud, indexed once and reused across trajectories.
#[derive(Debug, Clone)]
pub struct CollisionIndex {
    cfg: CollisionConfig,
    tree: KdIndex,
}

impl CollisionIndex {
    pub fn new(cloud: &PointCloud, cfg: &CollisionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg: cfg.clone(), tree: KdIndex::build(cfg.filter(cloud)) })
    }

    /// Neighbours among the `knn` nearest that lie within the radius.
    pub fn count_near(&self, p: &Vector3<f64>) -> usize {
        let r2 = self.cfg.radius_m * self.cfg.radius_m;
        self.tree.knn(p, self.cfg.knn).iter().take_while(|(d, _)| *d <= r2).count()
    }

    /// Index of the first collided position, or `n − 1` if none collides.
    pub fn score_positions(&self, positions: &[Vector3<f64>]) -> Result<usize> {
        if positions.is_empty() {
            return Err(Error::Domain("collision score of an empty trajectory".into()));
        }
        Ok(positions
            .iter()
            .position(|p| self.count_near(p) > self.cfg.point_threshold)
            .unwrap_or(positions.len() - 1))
    }
}

pub fn collision_free_score(traj: &Trajectory, cloud: &PointCloud, cfg: &CollisionConfig) -> Result<usize> {
    CollisionIndex::new(cloud, cfg)?.score_positions(&traj.positions())
}

/// O(n·M) reference: counts every collidable point within the radius, capped at `knn`.
pub fn brute_force_collision_score(traj: &Trajectory, cloud: &PointCloud, cfg: &CollisionConfig) -> Result<usize> {
    cfg.validate()?;
    if traj.is_empty() {
        return Err(Error::Domain("collision score of an empty trajectory".into()));
    }
    let pts = cfg.filter(cloud);
    let r2 = cfg.radius_m * cfg.radius_m;
    let positions = traj.positions();
    for (i, p) in positions.iter().enumerate() {
        let near = pts.iter().filter(|q| dist2(p, q) <= r2).count().min(cfg.knn);
        if near > cfg.point_threshold {
            return Ok(i);
        }
    }
    Ok(positions.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{CloudPoint, FrameTag, Pose6D};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize, step: f64) -> Trajectory {
        let poses = (0..n).map(|i| Pose6D::from_yaw(i as f64 * 0.05, Vector3::new(i as f64 * step, 0.0, 1.4), 0.0)).collect();
        Trajectory::new(poses, FrameTag::Ego)
    }

    fn point(p: Vector3<f64>, semantic: SemanticClass) -> CloudPoint {
        CloudPoint { position: p, color: [0; 3], semantic }
    }

    #[test]
    fn empty_cloud_scores_maximum() {
        let t = line(100, 0.05);
        assert_eq!(collision_free_score(&t, &PointCloud::default(), &CollisionConfig::default()).unwrap(), 99);
    }

    #[test]
    fn wall_slab_is_hit_at_expected_step() {
        // Dense slab of wall points centred on x = 2.0; step 40 is the first within 0.16 m.
        let mut cloud = PointCloud::default();
        for iy in -10..=10 {
            for iz in -10..=10 {
                for x in [2.0, 2.02] {
                    cloud.points.push(point(Vector3::new(x, iy as f64 * 0.02, 1.4 + iz as f64 * 0.02), SemanticClass::Wall));
                }
            }
        }
        let t = line(100, 0.05);
        let cfg = CollisionConfig::default();
        let fast = collision_free_score(&t, &cloud, &cfg).unwrap();
        assert_eq!(fast, brute_force_collision_score(&t, &cloud, &cfg).unwrap());
        assert_eq!(fast, 37);
    }

    #[test]
    fn threshold_is_strict() {
        let t = line(5, 0.0);
        let cfg = CollisionConfig::default();
        let mut cloud = PointCloud::default();
        for i in 0..10 {
            cloud.points.push(point(Vector3::new(0.01 * i as f64, 0.0, 1.4), SemanticClass::Wall));
        }
        assert_eq!(collision_free_score(&t, &cloud, &cfg).unwrap(), 4);
        cloud.points.push(point(Vector3::new(0.0, 0.1, 1.4), SemanticClass::Wall));
        assert_eq!(collision_free_score(&t, &cloud, &cfg).unwrap(), 0);
    }

    #[test]
    fn doors_and_movables_are_ignored() {
        let t = line(5, 0.0);
        let mut cloud = PointCloud::default();
        for i in 0..30 {
            let class = if i % 2 == 0 { SemanticClass::Door } else { SemanticClass::Movable };
            cloud.points.push(point(Vector3::new(0.0, 0.003 * i as f64, 1.4), class));
        }
        assert_eq!(collision_free_score(&t, &cloud, &CollisionConfig::default()).unwrap(), 4);
    }

    #[test]
    fn invalid_inputs() {
        let cfg = CollisionConfig { knn: 5, ..CollisionConfig::default() };
        assert!(collision_free_score(&line(3, 0.1), &PointCloud::default(), &cfg).is_err());
        let empty = Trajectory::new(Vec::new(), FrameTag::Ego);
        let err = collision_free_score(&empty, &PointCloud::default(), &CollisionConfig::default());
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    fn random_pair(seed: u64) -> (Trajectory, PointCloud) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..60);
        let poses = (0..n)
            .map(|i| Pose6D::from_yaw(i as f64 * 0.05, Vector3::new(i as f64 * 0.04, rng.gen_range(-0.1..0.1), 0.0), 0.0))
            .collect();
        let m = rng.gen_range(0..800);
        let cloud = PointCloud {
            points: (0..m)
                .map(|_| {
                    let p = Vector3::new(rng.gen_range(-0.2..2.5), rng.gen_range(-0.3..0.3), rng.gen_range(-0.2..0.2));
                    point(p, SemanticClass::ALL[rng.gen_range(0..NUM_CLASSES)])
                })
                .collect(),
        };
        (Trajectory::new(poses, FrameTag::Ego), cloud)
    }

    proptest! {
        #[test]
        fn equals_brute_force(seed in 0u64..10_000) {
            let (t, cloud) = random_pair(seed);
            let cfg = CollisionConfig::default();
            prop_assert_eq!(
                collision_free_score(&t, &cloud, &cfg).unwrap(),
                brute_force_collision_score(&t, &cloud, &cfg).unwrap()
            );
        }

        #[test]
        fn adding_points_never_raises_the_score(seed in 0u64..10_000, extra in 0usize..200) {
            let (t, mut cloud) = random_pair(seed);
            let cfg = CollisionConfig::default();
            let before = collision_free_score(&t, &cloud, &cfg).unwrap();
            let (_, more) = random_pair(seed + 1);
            cloud.points.extend(more.points.into_iter().take(extra));
            prop_assert!(collision_free_score(&t, &cloud, &cfg).unwrap() <= before);
        }
    }
}
