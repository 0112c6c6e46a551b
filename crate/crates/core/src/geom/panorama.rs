//! Equirectangular egocentric panoramas.
//!
//! Columns span azimuth [-π, π) with the ego +X axis at column `W/2`; rows span
//! elevation from +π/2 (row 0) down to -π/2. Depth stores Euclidean range.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector3;

use super::camera::{CloudPoint, PointCloud};
use super::pose::EgoFrame;
use super::semantic::SemanticClass;
use crate::error::{Error, Result};

const MIN_RANGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
    pub color: Vec<[u8; 3]>,
    pub semantic: Vec<SemanticClass>,
}

/// Result of projecting a cloud: the panorama plus how many points sat on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub panorama: Panorama,
    pub dropped: usize,
}

impl Panorama {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            depth: vec![0.0; n],
            color: vec![[0; 3]; n],
            semantic: vec![SemanticClass::NoLabel; n],
        }
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of pixels holding a point.
    pub fn coverage(&self) -> usize {
        self.depth.iter().filter(|d| **d > 0.0).count()
    }

    pub fn covered_columns(&self) -> usize {
        (0..self.width)
            .filter(|&c| (0..self.height).any(|r| self.depth[self.index(c, r)] > 0.0))
            .count()
    }

    /// Pixel holding the ego-frame direction `p`, or `None` at the origin.
    pub fn bin_of(width: usize, height: usize, p: &Vector3<f64>) -> Option<(usize, usize)> {
        let horizontal = (p.x * p.x + p.y * p.y).sqrt();
        if (horizontal * horizontal + p.z * p.z).sqrt() < MIN_RANGE {
            return None;
        }
        let az = p.y.atan2(p.x);
        let el = p.z.atan2(horizontal);
        let col = (((az + PI) / TAU) * width as f64).floor() as isize;
        let col = col.rem_euclid(width as isize) as usize;
        let row = (((FRAC_PI_2 - el) / PI) * height as f64).floor() as isize;
        let row = row.clamp(0, height as isize - 1) as usize;
        Some((col, row))
    }

    /// Unit direction through the center of pixel (col, row).
    pub fn bin_direction(&self, col: usize, row: usize) -> Vector3<f64> {
        let az = (col as f64 + 0.5) * TAU / self.width as f64 - PI;
        let el = FRAC_PI_2 - (row as f64 + 0.5) * PI / self.height as f64;
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }

    /// Largest angular extent of one pixel in radians.
    pub fn bin_width(&self) -> f64 {
        (TAU / self.width as f64).max(PI / self.height as f64)
    }

    /// Re-projects every covered pixel into an ego-frame point cloud.
    pub fn to_cloud(&self) -> PointCloud {
        let mut points = Vec::with_capacity(self.coverage());
        for row in 0..self.height {
            for col in 0..self.width {
                let i = self.index(col, row);
                let d = self.depth[i];
                if d > 0.0 {
                    points.push(CloudPoint {
                        position: self.bin_direction(col, row) * d as f64,
                        color: self.color[i],
                        semantic: self.semantic[i],
                    });
                }
            }
        }
        PointCloud { points }
    }

    /// Verifies depth ≥ 0 and no labels on uncovered pixels.
    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if self.depth.len() != n || self.color.len() != n || self.semantic.len() != n {
            return Err(Error::Shape(format!("panorama buffers do not match {}x{}", self.width, self.height)));
        }
        for i in 0..n {
            let d = self.depth[i];
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::Domain(format!("panorama depth {d} at pixel {i}")));
            }
            if d == 0.0 && self.semantic[i] != SemanticClass::NoLabel {
                return Err(Error::Domain(format!("uncovered pixel {i} carries a label")));
            }
        }
        Ok(())
    }
}

/// Total order used by the z-buffer: range first, then point content, so the
/// winner of every bin does not depend on input order.
fn point_key_cmp(ra: f64, a: &CloudPoint, rb: f64, b: &CloudPoint) -> Ordering {
    ra.total_cmp(&rb)
        .then_with(|| a.position.x.total_cmp(&b.position.x))
        .then_with(|| a.position.y.total_cmp(&b.position.y))
        .then_with(|| a.position.z.total_cmp(&b.position.z))
        .then_with(|| a.color.cmp(&b.color))
        .then_with(|| a.semantic.cmp(&b.semantic))
}

/// Projects a world-frame cloud into the egocentric panorama of `ego`.
pub fn panorama_project(cloud: &PointCloud, ego: &EgoFrame, width: usize, height: usize) -> Result<Projection> {
    if width < 4 || height < 4 {
        return Err(Error::Shape(format!("panorama must be at least 4x4, got {width}x{height}")));
    }
    let mut panorama = Panorama::empty(width, height);
    // Winning (range, point) per pixel.
    let mut best: Vec<Option<(f64, CloudPoint)>> = vec![None; width * height];
    let mut dropped = 0;
    for pt in &cloud.points {
        let local = ego.world_to_ego_point(&pt.position);
        let range = local.norm();
        let Some((col, row)) = Panorama::bin_of(width, height, &local) else {
            dropped += 1;
            continue;
        };
        let mut candidate = *pt;
        candidate.position = local;
        let slot = &mut best[row * width + col];
        let better = match slot {
            None => true,
            Some((r, cur)) => point_key_cmp(range, &candidate, *r, cur) == Ordering::Less,
        };
        if better {
            *slot = Some((range, candidate));
        }
    }
    for (i, slot) in best.into_iter().enumerate() {
        if let Some((range, pt)) = slot {
            panorama.depth[i] = range as f32;
            panorama.color[i] = pt.color;
            panorama.semantic[i] = pt.semantic;
        }
    }
    Ok(Projection { panorama, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64, y: f64, z: f64, sem: SemanticClass) -> CloudPoint {
        CloudPoint {
            position: Vector3::new(x, y, z),
            color: sem.palette(),
            semantic: sem,
        }
    }

    fn project(points: Vec<CloudPoint>, w: usize, h: usize) -> Projection {
        panorama_project(&PointCloud { points }, &EgoFrame::identity(), w, h).unwrap()
    }

    #[test]
    fn forward_point_lands_in_center() {
        let p = project(vec![pt(5.0, 0.0, 0.0, SemanticClass::Wall)], 96, 32);
        let i = p.panorama.index(48, 16);
        assert_eq!(p.panorama.depth[i], 5.0);
        assert_eq!(p.panorama.semantic[i], SemanticClass::Wall);
        assert_eq!(p.panorama.coverage(), 1);
    }

    #[test]
    fn zenith_point_lands_in_top_row() {
        let p = project(vec![pt(0.0, 0.0, 5.0, SemanticClass::Wall)], 96, 32);
        let row0 = (0..96).any(|c| p.panorama.depth[p.panorama.index(c, 0)] == 5.0);
        assert!(row0);
    }

    #[test]
    fn nearest_point_wins_bin() {
        let dir = Vector3::new(1.0, 0.2, 0.1).normalize();
        let far = dir * 3.0;
        let near = dir * 2.0;
        let points = vec![
            pt(far.x, far.y, far.z, SemanticClass::Wall),
            pt(near.x, near.y, near.z, SemanticClass::Obstacle),
        ];
        // Exhaustive oracle: both share a bin; the bin keeps the minimum range.
        assert_eq!(Panorama::bin_of(96, 32, &far), Panorama::bin_of(96, 32, &near));
        let (c, r) = Panorama::bin_of(96, 32, &near).unwrap();
        let p = project(points, 96, 32);
        let i = p.panorama.index(c, r);
        assert!((p.panorama.depth[i] - 2.0).abs() < 1e-6);
        assert_eq!(p.panorama.semantic[i], SemanticClass::Obstacle);
    }

    #[test]
    fn origin_points_are_dropped() {
        let p = project(vec![pt(0.0, 0.0, 0.0, SemanticClass::Wall), pt(1.0, 0.0, 0.0, SemanticClass::Wall)], 8, 4);
        assert_eq!(p.dropped, 1);
        assert_eq!(p.panorama.coverage(), 1);
    }

    #[test]
    fn tiny_panorama_is_rejected() {
        assert!(panorama_project(&PointCloud::default(), &EgoFrame::identity(), 3, 8).is_err());
    }

    fn random_cloud(seed: u64, n: usize) -> Vec<CloudPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = SemanticClass::ALL;
        (0..n)
            .map(|_| {
                pt(
                    rng.gen_range(-8.0..8.0),
                    rng.gen_range(-8.0..8.0),
                    rng.gen_range(-3.0..3.0),
                    classes[rng.gen_range(1..8)],
                )
            })
            .collect()
    }

    #[test]
    fn reprojection_round_trip() {
        let points = random_cloud(4, 2000);
        let p = project(points.clone(), 48, 16);
        let pano = &p.panorama;
        pano.validate().unwrap();
        for row in 0..pano.height {
            for col in 0..pano.width {
                let i = pano.index(col, row);
                if pano.depth[i] == 0.0 {
                    continue;
                }
                let dir = pano.bin_direction(col, row);
                let rec = dir * pano.depth[i] as f64;
                let ok = points.iter().any(|s| {
                    let r = s.position.norm();
                    let ang = s.position.normalize().dot(&dir).clamp(-1.0, 1.0).acos();
                    ang <= pano.bin_width() && (r - rec.norm()).abs() <= 1e-6
                });
                assert!(ok, "pixel ({col},{row}) has no matching source point");
            }
        }
    }

    proptest! {
        #[test]
        fn projection_is_permutation_invariant(seed in 0u64..1000) {
            let mut points = random_cloud(seed, 300);
            // Add exact duplicates in range with different labels.
            points.push(pt(2.0, 0.0, 0.0, SemanticClass::Door));
            points.push(pt(2.0, 0.0, 0.0, SemanticClass::Wall));
            let a = project(points.clone(), 24, 8);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 77);
            points.shuffle(&mut rng);
            let b = project(points, 24, 8);
            prop_assert_eq!(a, b);
        }
    }
}
