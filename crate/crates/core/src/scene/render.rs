use nalgebra::Vector3;

use super::layout::{Scene, Surface};
use crate::geom::{
    optical_to_body, CameraIntrinsics, CloudPoint, ColorImage, DepthImage, Image, PointCloud, Pose6D, SemanticClass,
    SemanticImage,
};

/// Nearest hit along `origin + t·dir`, as (t, surface index).
pub fn cast_ray(surfaces: &[Surface], origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, s) in surfaces.iter().enumerate() {
        if let Some(t) = s.intersect(origin, dir) {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
    }
    best
}

/// Ray-casts every pixel. Depth is measured along the optical axis; misses are 0.
pub fn render_frame(
    scene: &Scene,
    cam_pose: &Pose6D,
    intr: &CameraIntrinsics,
) -> (DepthImage, ColorImage, SemanticImage) {
    let (w, h) = (intr.width, intr.height);
    let mut depth = Image::filled(w, h, 0.0f32);
    let mut color = Image::filled(w, h, SemanticClass::NoLabel.palette());
    let mut sem = Image::filled(w, h, SemanticClass::NoLabel);
    let rot = cam_pose.rotation();
    for v in 0..h {
        for u in 0..w {
            // The ray has unit optical z, so its hit parameter is the z-depth.
            let dir = rot * optical_to_body(&intr.pixel_ray(u as f64, v as f64));
            if let Some((t, i)) = cast_ray(&scene.surfaces, &cam_pose.position, &dir) {
                let class = scene.surfaces[i].class;
                depth.set(u, v, t as f32);
                color.set(u, v, class.palette());
                sem.set(u, v, class);
            }
        }
    }
    (depth, color, sem)
}

/// Points on a regular grid over every surface, `spacing_m` apart.
pub fn sample_surface_cloud(scene: &Scene, spacing_m: f64) -> PointCloud {
    let mut points = Vec::new();
    for s in &scene.surfaces {
        let nu = ((2.0 * s.half_u / spacing_m).ceil() as usize).max(1);
        let nv = ((2.0 * s.half_v / spacing_m).ceil() as usize).max(1);
        for i in 0..=nu {
            let a = -s.half_u + 2.0 * s.half_u * i as f64 / nu as f64;
            for j in 0..=nv {
                let b = -s.half_v + 2.0 * s.half_v * j as f64 / nv as f64;
                points.push(CloudPoint {
                    position: s.center + s.u * a + s.v * b,
                    color: s.class.palette(),
                    semantic: s.class,
                });
            }
        }
    }
    PointCloud { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::layout::{generate_scene, SceneSpec, Template, WaypointGraph};
    use nalgebra::Vector2;

    fn wall_scene() -> Scene {
        let spec = SceneSpec::new(Template::Corridor, 0);
        Scene {
            spec,
            surfaces: vec![Surface::vertical(
                Vector2::new(2.0, 50.0),
                Vector2::new(2.0, -50.0),
                -50.0,
                100.0,
                SemanticClass::Wall,
            )],
            graph: WaypointGraph::default(),
            start: 0,
            exits: vec![],
            bounds_min: Vector3::repeat(-50.0),
            bounds_max: Vector3::repeat(50.0),
        }
    }

    #[test]
    fn wall_depth_matches_analytic_oracle() {
        let scene = wall_scene();
        let k = CameraIntrinsics::desk_default();
        let (d, _, s) = render_frame(&scene, &Pose6D::identity(), &k);
        let ray_len_per_depth = |u: usize, v: usize| intrinsic_ray(&k, u, v).norm();
        for v in 0..k.height {
            for u in 0..k.width {
                // The wall plane is perpendicular to the optical axis, so every
                // pixel's z-depth is 2 m and its Euclidean range 2/cos(angle).
                assert!((d.get(u, v) as f64 - 2.0).abs() < 1e-5);
                let cos = 1.0 / ray_len_per_depth(u, v);
                let range = d.get(u, v) as f64 * ray_len_per_depth(u, v);
                assert!((range - 2.0 / cos).abs() < 1e-5);
                assert_eq!(s.get(u, v), SemanticClass::Wall);
            }
        }
        assert_eq!(d.get(32, 24), 2.0);
    }

    fn intrinsic_ray(k: &CameraIntrinsics, u: usize, v: usize) -> Vector3<f64> {
        k.pixel_ray(u as f64, v as f64)
    }

    #[test]
    fn open_sky_is_empty() {
        let scene = wall_scene();
        let k = CameraIntrinsics::desk_default();
        let back = Pose6D::from_yaw(0.0, Vector3::zeros(), std::f64::consts::PI);
        let (d, _, s) = render_frame(&scene, &back, &k);
        assert!(d.data.iter().all(|x| *x == 0.0));
        assert!(s.data.iter().all(|c| *c == SemanticClass::NoLabel));
    }

    #[test]
    fn corridor_view_sees_walls_and_floor() {
        let scene = generate_scene(&SceneSpec::new(Template::Corridor, 2)).unwrap();
        let k = CameraIntrinsics::desk_default();
        let pose = Pose6D::from_yaw(0.0, Vector3::new(1.0, 0.0, 1.4), 0.0);
        let (_, c, s) = render_frame(&scene, &pose, &k);
        assert_eq!(s.get(0, 24), SemanticClass::Wall);
        assert_eq!(s.get(32, 47), SemanticClass::NormalGround);
        assert_eq!(c.get(32, 47), SemanticClass::NormalGround.palette());
    }

    #[test]
    fn surface_cloud_lies_on_surfaces() {
        let scene = generate_scene(&SceneSpec::new(Template::Stairwell, 1)).unwrap();
        let cloud = sample_surface_cloud(&scene, 0.1);
        assert!(cloud.len() > 1000);
        assert!(cloud.points.iter().any(|p| p.semantic == SemanticClass::Stair));
    }
}
