//! Canny edge detection on depth images, used to trim the unreliable pixels
//! stereo depth produces along object silhouettes.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geom::DepthImage;

pub const MAX_DILATE_PX: usize = 10;

/// Hysteresis thresholds on depth-gradient magnitude, in meters per pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for EdgeThresholds {
    fn default() -> Self {
        Self { low: 0.05, high: 0.15 }
    }
}

/// Sobel gradients scaled to meters/pixel, replicating the border.
fn sobel(depth: &DepthImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = depth.dims();
    let at = |u: isize, v: isize| -> f64 {
        let u = u.clamp(0, w as isize - 1) as usize;
        let v = v.clamp(0, h as isize - 1) as usize;
        depth.get(u, v) as f64
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for v in 0..h as isize {
        for u in 0..w as isize {
            let dx = (at(u + 1, v - 1) + 2.0 * at(u + 1, v) + at(u + 1, v + 1))
                - (at(u - 1, v - 1) + 2.0 * at(u - 1, v) + at(u - 1, v + 1));
            let dy = (at(u - 1, v + 1) + 2.0 * at(u, v + 1) + at(u + 1, v + 1))
                - (at(u - 1, v - 1) + 2.0 * at(u, v - 1) + at(u + 1, v - 1));
            let i = v as usize * w + u as usize;
            gx[i] = dx / 8.0;
            gy[i] = dy / 8.0;
        }
    }
    (gx, gy)
}

/// Boolean edge map from gradient magnitude, non-maximum suppression and hysteresis.
pub fn canny_edges(depth: &DepthImage, thresholds: EdgeThresholds) -> Vec<bool> {
    let (w, h) = depth.dims();
    let (gx, gy) = sobel(depth);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let mag_at = |u: isize, v: isize| -> f64 {
        if u < 0 || v < 0 || u >= w as isize || v >= h as isize {
            0.0
        } else {
            mag[v as usize * w + u as usize]
        }
    };

    // Suppressed magnitude: a pixel survives when it is strictly larger than its
    // neighbor along the gradient and not smaller than the one behind it, so a
    // symmetric two-pixel ridge keeps exactly one pixel.
    let mut thin = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let m = mag[i];
            if m < thresholds.low {
                continue;
            }
            let angle = gy[i].atan2(gx[i]);
            let sector = ((angle / std::f64::consts::FRAC_PI_4).round() as isize).rem_euclid(8);
            let (du, dv) = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)][sector as usize];
            let ahead = mag_at(u as isize + du, v as isize + dv);
            let behind = mag_at(u as isize - du, v as isize - dv);
            if m > ahead && m >= behind {
                thin[i] = m;
            }
        }
    }

    let mut edges = vec![false; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= thresholds.high {
            edges[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (u, v) = ((i % w) as isize, (i / w) as isize);
        for dv in -1..=1 {
            for du in -1..=1 {
                let (nu, nv) = (u + du, v + dv);
                if nu < 0 || nv < 0 || nu >= w as isize || nv >= h as isize {
                    continue;
                }
                let j = nv as usize * w + nu as usize;
                if !edges[j] && thin[j] >= thresholds.low {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    edges
}

/// Invalidates every pixel within `dilate_px` (Chebyshev) of a depth edge.
pub fn trim_depth_edges(depth: &DepthImage, thresholds: EdgeThresholds, dilate_px: usize) -> Result<DepthImage> {
    if dilate_px > MAX_DILATE_PX {
        return Err(Error::Config(format!("dilate_px {dilate_px} exceeds {MAX_DILATE_PX}")));
    }
    let (w, h) = depth.dims();
    let edges = canny_edges(depth, thresholds);
    let mut out = depth.clone();
    let r = dilate_px as isize;
    for v in 0..h as isize {
        for u in 0..w as isize {
            if !edges[v as usize * w + u as usize] {
                continue;
            }
            for nv in (v - r).max(0)..=(v + r).min(h as isize - 1) {
                for nu in (u - r).max(0)..=(u + r).min(w as isize - 1) {
                    out.set(nu as usize, nv as usize, 0.0);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Image;

    fn step_image(w: usize, h: usize, split: usize) -> DepthImage {
        let mut img = Image::filled(w, h, 1.0f32);
        for v in 0..h {
            for u in split..w {
                img.set(u, v, 5.0);
            }
        }
        img
    }

    #[test]
    fn constant_depth_is_untouched() {
        let img = Image::filled(16, 12, 2.5f32);
        let out = trim_depth_edges(&img, EdgeThresholds::default(), 3).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn step_edge_zeroes_a_band() {
        let split = 10;
        let img = step_image(24, 12, split);
        let out = trim_depth_edges(&img, EdgeThresholds::default(), 2).unwrap();
        // Oracle: Sobel responds on both sides of the step with equal magnitude,
        // the thinned edge sits on the far (5 m) side at column `split`, and
        // dilation by 2 zeroes columns split-2 ..= split+2.
        for u in 0..24 {
            let zeroed = (0..12).all(|v| out.get(u, v) == 0.0);
            let intact = (0..12).all(|v| out.get(u, v) == img.get(u, v));
            if (split - 2..=split + 2).contains(&u) {
                assert!(zeroed, "column {u} should be zeroed");
            } else {
                assert!(intact, "column {u} should be intact");
            }
        }
    }

    #[test]
    fn no_dilation_only_removes_edge_pixels() {
        let img = step_image(24, 12, 10);
        let out = trim_depth_edges(&img, EdgeThresholds::default(), 0).unwrap();
        let edges = canny_edges(&img, EdgeThresholds::default());
        for v in 0..12 {
            for u in 0..24 {
                let i = v * 24 + u;
                assert_eq!(out.get(u, v) == 0.0, edges[i]);
            }
        }
        assert_eq!(edges.iter().filter(|e| **e).count(), 12);
    }

    #[test]
    fn smooth_ramp_has_no_edges() {
        let mut img = Image::filled(20, 20, 0.0f32);
        for v in 0..20 {
            for u in 0..20 {
                img.set(u, v, 1.0 + 0.04 * u as f32);
            }
        }
        assert!(canny_edges(&img, EdgeThresholds::default()).iter().all(|e| !e));
    }

    #[test]
    fn oversized_dilation_is_rejected() {
        let img = Image::filled(4, 4, 1.0f32);
        assert!(trim_depth_edges(&img, EdgeThresholds::default(), 11).is_err());
    }
}
