//! Region-growing line segment detector in the style of LSD, without the
//! a-contrario validation step.
//!
//! Gradients come from the 2x2 difference mask on the raw intensities and are
//! then smoothed, so adding a constant to the image leaves every intermediate
//! value bit-identical. Orientation is compared modulo pi: both flanks of a
//! thin dark bar grow into the same region and yield one segment on its axis.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::{gaussian_blur, ImageRecord, LineSegment};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LsdConfig {
    /// Angular tolerance for region growing, degrees.
    pub angle_tolerance_deg: f64,
    /// Minimum segment length as a fraction of the image diagonal.
    pub min_length_frac: f64,
    /// Fewer surviving segments than this is reported as an error.
    pub min_segments: usize,
    /// Smoothing applied to the gradient field, pixels.
    pub gradient_sigma: f64,
    /// Intensity quantization error used for the gradient floor, LSD's `q`.
    pub quantization: f64,
    /// Minimum fraction of the fitted rectangle covered by region pixels.
    pub min_density: f64,
}

impl Default for LsdConfig {
    fn default() -> Self {
        LsdConfig {
            angle_tolerance_deg: 22.5,
            min_length_frac: 0.02,
            min_segments: 10,
            gradient_sigma: 0.8,
            quantization: 2.0,
            min_density: 0.4,
        }
    }
}

struct Gradient {
    w: usize,
    h: usize,
    angle: Vec<f64>,
    mag: Vec<f64>,
}

/// Gradient on the (w-1)x(h-1) grid of pixel corners; sample (x, y) sits at
/// pixel coordinate (x + 0.5, y + 0.5).
fn gradient(img: &ImageRecord, sigma: f64) -> Gradient {
    let (w, h) = (img.width(), img.height());
    let (gw, gh) = (w - 1, h - 1);
    let px = |x: usize, y: usize| img.gray[y * w + x] as f64;
    let mut gx = vec![0.0; gw * gh];
    let mut gy = vec![0.0; gw * gh];
    for y in 0..gh {
        for x in 0..gw {
            let (a, b, c, d) = (px(x, y), px(x + 1, y), px(x, y + 1), px(x + 1, y + 1));
            gx[y * gw + x] = 0.5 * (b + d - a - c);
            gy[y * gw + x] = 0.5 * (c + d - a - b);
        }
    }
    let gx = gaussian_blur(&gx, gw, gh, sigma);
    let gy = gaussian_blur(&gy, gw, gh, sigma);
    let mag = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let angle = gx.iter().zip(&gy).map(|(a, b)| b.atan2(*a)).collect();
    Gradient { w: gw, h: gh, angle, mag }
}

/// Difference of two orientations modulo pi, in [0, pi/2].
fn orientation_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Detects line segments; output is sorted by `(p0.y, p0.x, length)` with `p0`
/// the endpoint that comes first in that order.
pub fn detect_line_segments(img: &ImageRecord, cfg: &LsdConfig) -> Result<Vec<LineSegment>> {
    let segments = detect_unchecked(img, cfg);
    if segments.len() < cfg.min_segments {
        return Err(Error::TooFewSegments {
            found: segments.len(),
            required: cfg.min_segments,
        });
    }
    Ok(segments)
}

fn detect_unchecked(img: &ImageRecord, cfg: &LsdConfig) -> Vec<LineSegment> {
    let tol = cfg.angle_tolerance_deg.to_radians();
    let g = gradient(img, cfg.gradient_sigma);
    let threshold = cfg.quantization / tol.sin();
    let min_len = cfg.min_length_frac * img.info.diagonal();
    let (gw, gh) = (g.w, g.h);

    let mut order: Vec<usize> = (0..gw * gh).filter(|&k| g.mag[k] > threshold).collect();
    order.sort_by(|&a, &b| g.mag[b].total_cmp(&g.mag[a]).then(a.cmp(&b)));
    let mut used = vec![false; gw * gh];
    let mut segments = Vec::new();
    let mut region = Vec::new();
    let mut queue = VecDeque::new();

    for &seed in &order {
        if used[seed] {
            continue;
        }
        region.clear();
        used[seed] = true;
        region.push(seed);
        queue.push_back(seed);
        // region orientation tracked with doubled angles (axis statistics)
        let (mut sx, mut sy) = ((2.0 * g.angle[seed]).cos(), (2.0 * g.angle[seed]).sin());
        let mut reg_angle = g.angle[seed];
        while let Some(k) = queue.pop_front() {
            let (x, y) = ((k % gw) as isize, (k / gw) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if (dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= gw as isize || ny >= gh as isize {
                        continue;
                    }
                    let n = ny as usize * gw + nx as usize;
                    if used[n] || g.mag[n] <= threshold || orientation_diff(g.angle[n], reg_angle) > tol {
                        continue;
                    }
                    used[n] = true;
                    region.push(n);
                    queue.push_back(n);
                    sx += (2.0 * g.angle[n]).cos();
                    sy += (2.0 * g.angle[n]).sin();
                    reg_angle = 0.5 * sy.atan2(sx);
                }
            }
        }
        if let Some(seg) = fit_rectangle(&region, &g, min_len, cfg.min_density) {
            segments.push(seg);
        }
    }
    let (w, h) = (img.info.width as f64, img.info.height as f64);
    for s in segments.iter_mut() {
        for p in [&mut s.p0, &mut s.p1] {
            p.x = p.x.clamp(0.0, w);
            p.y = p.y.clamp(0.0, h);
        }
        if (s.p1.y, s.p1.x) < (s.p0.y, s.p0.x) {
            std::mem::swap(&mut s.p0, &mut s.p1);
        }
    }
    segments.retain(|s| s.length() >= min_len);
    segments.sort_by(|a, b| {
        a.p0.y
            .total_cmp(&b.p0.y)
            .then(a.p0.x.total_cmp(&b.p0.x))
            .then(a.length().total_cmp(&b.length()))
    });
    segments
}

/// Magnitude-weighted principal axis of the region, extended to the extent of
/// its pixels.
fn fit_rectangle(region: &[usize], g: &Gradient, min_len: f64, min_density: f64) -> Option<LineSegment> {
    if region.len() < 3 {
        return None;
    }
    let pos = |k: usize| Vector2::new((k % g.w) as f64 + 0.5, (k / g.w) as f64 + 0.5);
    let wsum: f64 = region.iter().map(|&k| g.mag[k]).sum();
    let c = region.iter().map(|&k| pos(k) * g.mag[k]).sum::<Vector2<f64>>() / wsum;
    let mut cov = Matrix2::zeros();
    for &k in region {
        let d = pos(k) - c;
        cov += d * d.transpose() * g.mag[k];
    }
    let eig = cov.symmetric_eigen();
    let imax = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let dir: Vector2<f64> = eig.eigenvectors.column(imax).into();
    let normal = Vector2::new(-dir.y, dir.x);
    let (mut l0, mut l1, mut w0, mut w1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &k in region {
        let d = pos(k) - c;
        let (l, w) = (d.dot(&dir), d.dot(&normal));
        l0 = l0.min(l);
        l1 = l1.max(l);
        w0 = w0.min(w);
        w1 = w1.max(w);
    }
    let length = l1 - l0;
    if length < min_len {
        return None;
    }
    let density = region.len() as f64 / ((length + 1.0) * (w1 - w0 + 1.0));
    if density < min_density {
        return None;
    }
    Some(LineSegment::new(c + dir * l0, c + dir * l1, wsum / region.len() as f64 / 255.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas(w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> ImageRecord {
        let buf = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        ImageRecord::from_gray(0, w, h, buf).unwrap()
    }

    fn bar_cfg() -> LsdConfig {
        LsdConfig {
            min_segments: 1,
            ..LsdConfig::default()
        }
    }

    #[test]
    fn thin_bar_gives_one_segment_on_its_axis() {
        // black bar: rows 49..=51, columns 40..90 (50 px), axis y = 50.5
        let img = canvas(128, 100, |x, y| if (40..90).contains(&x) && (49..52).contains(&y) { 0 } else { 255 });
        let segs = detect_line_segments(&img, &bar_cfg()).unwrap();
        assert_eq!(segs.len(), 1, "{segs:?}");
        let s = segs[0];
        assert!((s.p0.y - 50.5).abs() < 1.0 && (s.p1.y - 50.5).abs() < 1.0, "{s:?}");
        assert!(s.length() > 45.0 && s.length() < 56.0);
    }

    #[test]
    fn uniform_image_has_no_segments() {
        let img = canvas(64, 64, |_, _| 128);
        assert!(matches!(
            detect_line_segments(&img, &LsdConfig::default()),
            Err(Error::TooFewSegments { found: 0, required: 10 })
        ));
    }

    #[test]
    fn checkerboard_edges_are_axis_aligned() {
        let img = canvas(256, 256, |x, y| if (x / 32 + y / 32) % 2 == 0 { 30 } else { 220 });
        let segs = detect_line_segments(&img, &LsdConfig::default()).unwrap();
        assert!(segs.len() >= 14, "{}", segs.len());
        for s in &segs {
            let d = s.direction();
            let a = d.y.atan2(d.x).to_degrees().rem_euclid(90.0);
            assert!(a.min(90.0 - a) < 2.0, "orientation {a}");
        }
    }

    #[test]
    fn constant_offset_invariance() {
        let img = canvas(160, 120, |x, y| {
            let v = ((x as f64 * 0.3).sin() * 60.0 + if x + 2 * y > 150 { 100.0 } else { 20.0 }) as i32;
            v.clamp(0, 200) as u8
        });
        let brighter = ImageRecord::from_gray(0, 160, 120, img.gray.iter().map(|v| v + 55).collect()).unwrap();
        let cfg = bar_cfg();
        assert_eq!(detect_unchecked(&img, &cfg), detect_unchecked(&brighter, &cfg));
    }

    #[test]
    fn coordinates_stay_in_bounds() {
        let img = canvas(96, 80, |x, y| if x > 70 || y < 5 || (x + y) % 37 < 3 { 0 } else { 255 });
        for s in detect_unchecked(&img, &bar_cfg()) {
            for p in [s.p0, s.p1] {
                assert!(img.info.contains_padded(&p));
            }
        }
    }
}
