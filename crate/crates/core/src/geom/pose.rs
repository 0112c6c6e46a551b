use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Sampling interval of every trajectory (20 Hz).
pub const STEP_S: f64 = 0.05;

const UNIT_TOL: f64 = 1e-3;

/// Timestamped rigid-body pose. The quaternion rotates body coordinates into
/// the parent frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6D {
    pub t_s: f64,
    pub position: Vector3<f64>,
    pub orientation: Quaternion<f64>,
}

impl Pose6D {
    pub fn new(t_s: f64, position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            t_s,
            position,
            orientation: orientation.into_inner(),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, Vector3::zeros(), UnitQuaternion::identity())
    }

    /// Pose standing at `position` facing `yaw` radians about +Z.
    pub fn from_yaw(t_s: f64, position: Vector3<f64>, yaw: f64) -> Self {
        Self::new(t_s, position, UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw))
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::new_normalize(self.orientation)
    }

    pub fn check_unit(&self) -> Result<()> {
        let n = self.orientation.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL || !self.position.iter().all(|v| v.is_finite())
        {
            return Err(Error::InvalidPose(format!(
                "quaternion norm {n} at t={} (position {:?})",
                self.t_s,
                self.position.as_slice()
            )));
        }
        Ok(())
    }

    /// Maps a point from this pose's body frame into the parent frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.position
    }

    /// Maps a parent-frame point into this pose's body frame.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().inverse() * (p - self.position)
    }

    pub fn inverse(&self) -> Pose6D {
        let r_inv = self.rotation().inverse();
        Pose6D::new(self.t_s, -(r_inv * self.position), r_inv)
    }

    /// Body +X axis expressed in the parent frame.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation() * Vector3::x()
    }

    /// Yaw, pitch and roll (intrinsic Z-Y-X) in radians.
    pub fn yaw_pitch_roll(&self) -> (f64, f64, f64) {
        let (roll, pitch, yaw) = self.rotation().euler_angles();
        (yaw, pitch, roll)
    }

    pub fn from_yaw_pitch_roll(t_s: f64, position: Vector3<f64>, yaw: f64, pitch: f64, roll: f64) -> Self {
        Self::new(t_s, position, UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    /// Rotation angle between the two orientations in radians.
    pub fn geodesic_angle(&self, other: &Pose6D) -> f64 {
        self.rotation().angle_to(&other.rotation())
    }
}

/// Rigid-body composition `a ∘ b`: `b` is interpreted in the frame of `a`.
/// The result keeps `b`'s timestamp.
pub fn compose_pose(a: &Pose6D, b: &Pose6D) -> Result<Pose6D> {
    a.check_unit()?;
    b.check_unit()?;
    let ra = a.rotation();
    let q = (ra * b.rotation()).into_inner();
    let orientation = q / q.norm();
    Ok(Pose6D {
        t_s: b.t_s,
        position: ra * b.position + a.position,
        orientation,
    })
}

/// Coordinate frame anchored at a reference pose: +Z opposes gravity, +X is
/// the reference forward axis projected onto the horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoFrame {
    pub origin: Vector3<f64>,
    /// Rotation taking ego coordinates to world coordinates.
    pub rotation: UnitQuaternion<f64>,
}

impl EgoFrame {
    pub fn identity() -> Self {
        Self {
            origin: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(reference: &Pose6D, gravity: &Vector3<f64>) -> Result<Self> {
        reference.check_unit()?;
        let g = gravity.norm();
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::DegenerateFrame(format!("gravity vector {:?}", gravity.as_slice())));
        }
        let z = -gravity / g;
        let f = reference.forward();
        let projected = f - z * f.dot(&z);
        let n = projected.norm();
        if n < 1e-6 {
            return Err(Error::DegenerateFrame(format!(
                "forward axis parallel to gravity (|projection| = {n:e})"
            )));
        }
        let x = projected / n;
        let y = z.cross(&x);
        let m = Matrix3::from_columns(&[x, y, z]);
        let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
        Ok(Self {
            origin: reference.position,
            rotation,
        })
    }

    pub fn world_to_ego_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.origin)
    }

    pub fn ego_to_world_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.origin
    }

    pub fn world_to_ego(&self, pose: &Pose6D) -> Pose6D {
        let r = self.rotation.inverse() * pose.rotation();
        Pose6D::new(pose.t_s, self.world_to_ego_point(&pose.position), r)
    }

    pub fn ego_to_world(&self, pose: &Pose6D) -> Pose6D {
        let r = self.rotation * pose.rotation();
        Pose6D::new(pose.t_s, self.ego_to_world_point(&pose.position), r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn homogeneous(p: &Pose6D) -> Matrix4<f64> {
        // Built from the raw quaternion components, independent of nalgebra's rotation code.
        let q = p.orientation / p.orientation.norm();
        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        Matrix4::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            p.position.x,
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            p.position.y,
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
            p.position.z,
            0.0,
            0.0,
            0.0,
            1.0,
        )
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose6D {
        let q = Quaternion::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        Pose6D {
            t_s: 0.0,
            position: Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
            orientation: q / q.norm(),
        }
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_pose(&mut rng);
        let c = compose_pose(&Pose6D::identity(), &p).unwrap();
        assert!((c.position - p.position).norm() < 1e-12);
        assert!(c.geodesic_angle(&p) < 1e-9);
    }

    #[test]
    fn inverse_composes_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_pose(&mut rng);
        let c = compose_pose(&p, &p.inverse()).unwrap();
        assert!(c.position.norm() < 1e-9);
        assert!(c.geodesic_angle(&Pose6D::identity()) < 1e-9);
    }

    #[test]
    fn two_quarter_yaws_make_a_half_turn() {
        let a = Pose6D::from_yaw(0.0, Vector3::new(1.0, 0.0, 0.0), std::f64::consts::FRAC_PI_2);
        let c = compose_pose(&a, &a).unwrap();
        let expected = homogeneous(&a) * homogeneous(&a);
        let got = homogeneous(&c);
        assert!((expected - got).abs().max() < 1e-12);
        assert!((c.position - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
        let (yaw, _, _) = c.yaw_pitch_roll();
        assert!((yaw.abs() - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn compose_matches_homogeneous_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = compose_pose(&a, &b).unwrap();
            let diff = (homogeneous(&a) * homogeneous(&b) - homogeneous(&c)).abs().max();
            assert!(diff < 1e-9, "diff {diff}");
        }
    }

    #[test]
    fn rejects_non_unit_quaternion() {
        let mut p = Pose6D::identity();
        p.orientation = Quaternion::new(1.01, 0.0, 0.0, 0.0);
        assert!(matches!(compose_pose(&p, &Pose6D::identity()), Err(Error::InvalidPose(_))));
    }

    #[test]
    fn ego_frame_rejects_vertical_forward() {
        let up = Pose6D::new(
            0.0,
            Vector3::zeros(),
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -std::f64::consts::FRAC_PI_2),
        );
        let err = EgoFrame::new(&up, &Vector3::new(0.0, 0.0, -9.81));
        assert!(matches!(err, Err(Error::DegenerateFrame(_))));
        assert!(EgoFrame::new(&Pose6D::identity(), &Vector3::zeros()).is_err());
    }

    proptest! {
        #[test]
        fn ego_round_trip(
            x in -10.0f64..10.0, y in -10.0f64..10.0, yaw in -3.1f64..3.1,
            px in -10.0f64..10.0, py in -10.0f64..10.0, pz in -2.0f64..2.0,
        ) {
            let r = Pose6D::from_yaw(0.0, Vector3::new(x, y, 1.4), yaw);
            let frame = EgoFrame::new(&r, &Vector3::new(0.0, 0.0, -9.81)).unwrap();
            let p = Vector3::new(px, py, pz);
            let back = frame.ego_to_world_point(&frame.world_to_ego_point(&p));
            prop_assert!((back - p).norm() < 1e-9);
            let anchored = frame.world_to_ego(&r);
            prop_assert!(anchored.position.norm() < 1e-9);
            let f = anchored.forward();
            prop_assert!(f.y.atan2(f.x).abs() < 1e-9);
        }
    }
}
