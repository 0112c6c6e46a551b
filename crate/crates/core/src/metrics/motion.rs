use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{Trajectory, STEP_S};

pub const SMOOTHNESS_EPS: f64 = 1e-3;

/// Speed and acceleration magnitudes at interior steps by central differences.
pub fn speeds_and_accels(positions: &[Vector3<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = positions.len();
    let mut v = Vec::with_capacity(n.saturating_sub(2));
    let mut a = Vec::with_capacity(n.saturating_sub(2));
    for i in 1..n.saturating_sub(1) {
        let (p0, p1, p2) = (&positions[i - 1], &positions[i], &positions[i + 1]);
        v.push((p2 - p0).norm() / (2.0 * STEP_S));
        a.push((p2 - 2.0 * p1 + p0).norm() / (STEP_S * STEP_S));
    }
    (v, a)
}

fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// `1 / (MAE_speed + MAE_accel + ε)` on 3-D positions.
pub fn smoothness(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("prediction has {} steps, ground truth {}", pred.len(), gt.len())));
    }
    if pred.len() < 3 {
        return Err(Error::Domain(format!("smoothness needs at least 3 steps, got {}", pred.len())));
    }
    if pred.frame != gt.frame {
        return Err(Error::Contract("smoothness compares trajectories in different frames".into()));
    }
    let (vp, ap) = speeds_and_accels(&pred.positions());
    let (vg, ag) = speeds_and_accels(&gt.positions());
    Ok(1.0 / (mae(&vp, &vg) + mae(&ap, &ag) + SMOOTHNESS_EPS))
}

/// Mean Euclidean position error over steps.
pub fn ade(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    if pred.len() != gt.len() || gt.is_empty() {
        return Err(Error::Shape(format!("prediction has {} steps, ground truth {}", pred.len(), gt.len())));
    }
    let sum: f64 = pred.positions().iter().zip(gt.positions()).map(|(p, g)| (p - g).norm()).sum();
    Ok(sum / gt.len() as f64)
}

pub fn best_of_n(samples: &[Trajectory], gt: &Trajectory) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("best-of-N over an empty sample set".into()));
    }
    samples.iter().try_fold(f64::INFINITY, |best, s| Ok(best.min(ade(s, gt)?)))
}

/// Best-of-N restricted to the first sample of the batch.
pub fn best_of_1(samples: &[Trajectory], gt: &Trajectory) -> Result<f64> {
    best_of_n(samples.get(..1).unwrap_or_default(), gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{FrameTag, Pose6D};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn from_positions(ps: &[Vector3<f64>]) -> Trajectory {
        let poses = ps.iter().enumerate().map(|(i, p)| Pose6D::from_yaw(i as f64 * STEP_S, *p, 0.0)).collect();
        Trajectory::new(poses, FrameTag::Ego)
    }

    fn straight(n: usize, speed: f64, offset: Vector3<f64>) -> Trajectory {
        from_positions(&(0..n).map(|i| offset + Vector3::new(speed * STEP_S * i as f64, 0.0, 0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn identical_trajectories_hit_the_cap() {
        let gt = straight(100, 1.1, Vector3::zeros());
        assert_eq!(smoothness(&gt, &gt).unwrap(), 1000.0);
    }

    #[test]
    fn uniform_speed_offset() {
        let gt = straight(100, 1.0, Vector3::zeros());
        let pred = straight(100, 1.1, Vector3::zeros());
        let s = smoothness(&pred, &gt).unwrap();
        assert!((s - 1.0 / (0.1 + SMOOTHNESS_EPS)).abs() < 1e-6, "{s}");
    }

    #[test]
    fn smoothness_contract() {
        let a = straight(10, 1.0, Vector3::zeros());
        let b = straight(9, 1.0, Vector3::zeros());
        assert!(matches!(smoothness(&a, &b), Err(Error::Shape(_))));
        let short = straight(2, 1.0, Vector3::zeros());
        assert!(smoothness(&short, &short).is_err());
    }

    #[test]
    fn constant_offsets() {
        let gt = straight(50, 1.0, Vector3::zeros());
        let s1 = straight(50, 1.0, Vector3::new(0.0, 1.0, 0.0));
        let s2 = straight(50, 1.0, Vector3::new(0.0, 2.0, 0.0));
        assert!((best_of_n(&[s2.clone(), s1.clone()], &gt).unwrap() - 1.0).abs() < 1e-12);
        assert!((best_of_1(&[s2, s1], &gt).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(best_of_n(&[gt.clone()], &gt).unwrap(), 0.0);
        assert!(matches!(best_of_n(&[], &gt), Err(Error::Domain(_))));
    }

    #[test]
    fn smoothness_falls_with_speed_noise() {
        let gt = straight(100, 1.0, Vector3::zeros());
        let mean_score = |amp: f64| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut total = 0.0;
            for _ in 0..50 {
                let mut x = 0.0;
                let ps: Vec<_> = (0..100)
                    .map(|_| {
                        let p = Vector3::new(x, 0.0, 0.0);
                        x += (1.0 + amp * rng.gen_range(-1.0..1.0)) * STEP_S;
                        p
                    })
                    .collect();
                total += smoothness(&from_positions(&ps), &gt).unwrap();
            }
            total / 50.0
        };
        let scores: Vec<f64> = [0.0, 0.01, 0.05, 0.1, 0.3].iter().map(|a| mean_score(*a)).collect();
        assert!(scores.windows(2).all(|w| w[1] < w[0]), "{scores:?}");
    }

    fn random_traj(rng: &mut ChaCha8Rng, n: usize) -> Trajectory {
        from_positions(
            &(0..n)
                .map(|_| Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-0.5..0.5)))
                .collect::<Vec<_>>(),
        )
    }

    proptest! {
        #[test]
        fn best_of_n_matches_scan_and_is_monotone(seed in 0u64..5000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gt = random_traj(&mut rng, 20);
            let samples: Vec<_> = (0..15).map(|_| random_traj(&mut rng, 20)).collect();
            let mut scan = f64::INFINITY;
            for s in &samples {
                let mut sum = 0.0;
                for (p, g) in s.positions().iter().zip(gt.positions()) {
                    sum += ((p.x - g.x).powi(2) + (p.y - g.y).powi(2) + (p.z - g.z).powi(2)).sqrt();
                }
                scan = scan.min(sum / 20.0);
            }
            prop_assert!((best_of_n(&samples, &gt).unwrap() - scan).abs() < 1e-12);
            let mut prev = f64::INFINITY;
            for k in 1..=15 {
                let b = best_of_n(&samples[..k], &gt).unwrap();
                prop_assert!(b <= prev);
                prev = b;
            }
        }
    }
}
