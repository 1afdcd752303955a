//! Corner detection and patch matching between two images.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian_blur, ImageRecord, PointMatch};
use crate::error::{Error, Result};
use crate::geom::ransac_homography;

pub const MIN_MATCHES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub max_corners: usize,
    /// Half-size of the square descriptor patch.
    pub patch_radius: usize,
    /// Lowe-style ratio between best and second-best descriptor distance.
    pub ratio: f64,
    /// RANSAC inlier threshold on symmetric transfer error, pixels.
    pub inlier_threshold: f64,
    pub ransac_iterations: usize,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            max_corners: 600,
            patch_radius: 5,
            ratio: 0.8,
            inlier_threshold: 3.0,
            ransac_iterations: 2000,
            seed: 0,
        }
    }
}

struct Keypoints {
    points: Vec<Vector2<f64>>,
    /// Zero-mean, unit-norm patches.
    descriptors: Vec<Vec<f64>>,
}

/// Harris corners with 5x5 non-maximum suppression, strongest first.
fn harris(img: &ImageRecord, cfg: &FeatureConfig) -> Keypoints {
    let (w, h) = (img.width(), img.height());
    let smooth = gaussian_blur(&img.gray_f64(), w, h, 1.0);
    let at = |x: usize, y: usize| smooth[y * w + x];
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
            let gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
            ixx[y * w + x] = gx * gx;
            iyy[y * w + x] = gy * gy;
            ixy[y * w + x] = gx * gy;
        }
    }
    let (ixx, iyy, ixy) = (
        gaussian_blur(&ixx, w, h, 1.5),
        gaussian_blur(&iyy, w, h, 1.5),
        gaussian_blur(&ixy, w, h, 1.5),
    );
    let resp: Vec<f64> = (0..w * h)
        .map(|k| ixx[k] * iyy[k] - ixy[k] * ixy[k] - 0.04 * (ixx[k] + iyy[k]).powi(2))
        .collect();
    let rmax = resp.iter().copied().fold(0.0f64, f64::max);
    let margin = cfg.patch_radius + 2;
    let mut cands = Vec::new();
    if rmax > 0.0 {
        for y in margin..h.saturating_sub(margin) {
            for x in margin..w.saturating_sub(margin) {
                let r = resp[y * w + x];
                if r <= 0.01 * rmax {
                    continue;
                }
                let is_max = (y - 2..=y + 2).all(|yy| {
                    (x - 2..=x + 2).all(|xx| {
                        let o = resp[yy * w + xx];
                        // strict on earlier neighbors so plateaus keep one pixel
                        o < r || (o == r && (yy, xx) >= (y, x))
                    })
                });
                if is_max {
                    cands.push((r, x, y));
                }
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));
    cands.truncate(cfg.max_corners);
    let rad = cfg.patch_radius as isize;
    let mut points = Vec::new();
    let mut descriptors = Vec::new();
    for &(_, x, y) in &cands {
        let patch: Vec<f64> = (-rad..=rad)
            .flat_map(|dy| (-rad..=rad).map(move |dx| (dx, dy)))
            .map(|(dx, dy)| at((x as isize + dx) as usize, (y as isize + dy) as usize))
            .collect();
        let mean = patch.iter().sum::<f64>() / patch.len() as f64;
        let centered: Vec<f64> = patch.iter().map(|v| v - mean).collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        points.push(Vector2::new(x as f64, y as f64));
        descriptors.push(centered.iter().map(|v| v / norm).collect());
    }
    Keypoints { points, descriptors }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Best and second-best neighbor of each descriptor of `from` in `to`.
fn nearest(from: &Keypoints, to: &Keypoints) -> Vec<Option<(usize, f64, f64)>> {
    from.descriptors
        .iter()
        .map(|d| {
            let mut best = (usize::MAX, f64::INFINITY);
            let mut second = f64::INFINITY;
            for (j, e) in to.descriptors.iter().enumerate() {
                let s = dist2(d, e);
                if s < best.1 {
                    second = best.1;
                    best = (j, s);
                } else if s < second {
                    second = s;
                }
            }
            (best.0 != usize::MAX).then_some((best.0, best.1.sqrt(), second.sqrt()))
        })
        .collect()
}

/// Corner matches between `a` and `b` (`pi` in `a`), filtered by a mutual
/// ratio test and a RANSAC homography.
pub fn match_features(a: &ImageRecord, b: &ImageRecord, cfg: &FeatureConfig) -> Result<Vec<PointMatch>> {
    let ka = harris(a, cfg);
    let kb = harris(b, cfg);
    let ab = nearest(&ka, &kb);
    let ba = nearest(&kb, &ka);
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for (i, m) in ab.iter().enumerate() {
        let Some((j, d1, d2)) = *m else { continue };
        // a zero second distance only happens with repeated texture
        if !(d1 < cfg.ratio * d2) {
            continue;
        }
        if ba[j].map(|(back, _, _)| back) != Some(i) {
            continue;
        }
        src.push(ka.points[i]);
        dst.push(kb.points[j]);
    }
    if src.len() < MIN_MATCHES {
        return Err(Error::InsufficientMatches {
            found: src.len(),
            required: MIN_MATCHES,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((a.info.id as u64) << 32) ^ b.info.id as u64);
    let fit = ransac_homography(&src, &dst, cfg.inlier_threshold, cfg.ransac_iterations, &mut rng)?;
    if fit.inliers.len() < MIN_MATCHES {
        return Err(Error::InsufficientMatches {
            found: fit.inliers.len(),
            required: MIN_MATCHES,
        });
    }
    Ok(fit
        .inliers
        .iter()
        .map(|&k| PointMatch { pi: src[k], pj: dst[k] })
        .collect())
}
