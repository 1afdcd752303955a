//! Texture mapping of deformed meshes onto one canvas with feather blending.

use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::GridMesh;
use crate::error::{Error, Result};
use crate::ingest::ImageRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompositeConfig {
    pub max_pixels: usize,
}

impl Default for CompositeConfig {
    fn default() -> Self {
        CompositeConfig { max_pixels: 64_000_000 }
    }
}

/// RGB canvas; pixel `(x, y)` sits at `origin + (x, y)` in mesh coordinates.
#[derive(Clone, Debug)]
pub struct Panorama {
    pub width: usize,
    pub height: usize,
    pub origin: Vector2<f64>,
    pub rgb: Vec<u8>,
    pub covered: Vec<bool>,
}

impl Panorama {
    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(path, &self.rgb, self.width as u32, self.height as u32, image::ColorType::Rgb8).map_err(|e| {
            Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        })
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let k = 3 * (y * self.width + x);
        [self.rgb[k], self.rgb[k + 1], self.rgb[k + 2]]
    }
}

/// `(u, v)` with `bilinear(q, u, v) = p`, by Newton's method from the center.
pub fn inverse_bilinear(q: &[Vector2<f64>; 4], p: &Vector2<f64>) -> Option<(f64, f64)> {
    let (a, b, c, d) = (q[0], q[1], q[2], q[3]);
    let (mut u, mut v) = (0.5, 0.5);
    let scale = (c - a).norm().max((d - b).norm()).max(1e-12);
    for _ in 0..12 {
        let f = (1.0 - u) * (1.0 - v) * a + u * (1.0 - v) * b + u * v * c + (1.0 - u) * v * d - p;
        if f.norm() <= 1e-10 * scale {
            return Some((u, v));
        }
        let du = (1.0 - v) * (b - a) + v * (c - d);
        let dv = (1.0 - u) * (d - a) + u * (c - b);
        let step = Matrix2::from_columns(&[du, dv]).try_inverse()? * f;
        u -= step.x;
        v -= step.y;
        if !u.is_finite() || !v.is_finite() {
            return None;
        }
    }
    let f = (1.0 - u) * (1.0 - v) * a + u * (1.0 - v) * b + u * v * c + (1.0 - u) * v * d - p;
    (f.norm() <= 1e-6 * scale).then_some((u, v))
}

fn sample(img: &ImageRecord, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = (img.width(), img.height());
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let px = |xx: usize, yy: usize| -> [f64; 3] {
        let k = yy * w + xx;
        match &img.rgb {
            Some(rgb) => [rgb[3 * k] as f64, rgb[3 * k + 1] as f64, rgb[3 * k + 2] as f64],
            None => [img.gray[k] as f64; 3],
        }
    };
    let (p00, p10, p01, p11) = (px(x0, y0), px(x1, y0), px(x0, y1), px(x1, y1));
    [0, 1, 2].map(|c| {
        (1.0 - fy) * ((1.0 - fx) * p00[c] + fx * p10[c]) + fy * ((1.0 - fx) * p01[c] + fx * p11[c])
    })
}

struct QuadBox {
    q: usize,
    min: Vector2<f64>,
    max: Vector2<f64>,
}

/// Warps every image through its mesh. Overlaps are blended with weights
/// proportional to the source pixel's distance from its image border.
pub fn composite_panorama(images: &[ImageRecord], meshes: &[GridMesh], cfg: &CompositeConfig) -> Result<Panorama> {
    let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
    for v in meshes.iter().flat_map(|m| &m.deformed) {
        if v.x.is_finite() && v.y.is_finite() {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
    }
    if !(lo.x < hi.x && lo.y < hi.y) {
        return Err(Error::EmptyCanvas);
    }
    // rounding noise must not add a row or column
    let origin = Vector2::new((lo.x + 1e-7).floor(), (lo.y + 1e-7).floor());
    let width = ((hi.x - 1e-7).ceil() - origin.x).max(1.0) as usize;
    let height = ((hi.y - 1e-7).ceil() - origin.y).max(1.0) as usize;
    if width.saturating_mul(height) > cfg.max_pixels {
        return Err(Error::CanvasTooLarge { width, height });
    }
    let boxes: Vec<Vec<QuadBox>> = meshes
        .iter()
        .map(|m| {
            (0..m.quad_count())
                .map(|q| {
                    let c = m.deformed_quad(q);
                    let min = c.iter().fold(Vector2::repeat(f64::INFINITY), |a, v| a.inf(v));
                    let max = c.iter().fold(Vector2::repeat(f64::NEG_INFINITY), |a, v| a.sup(v));
                    QuadBox { q, min, max }
                })
                .filter(|b| b.min.x.is_finite() && b.max.x.is_finite())
                .collect()
        })
        .collect();

    let mut rgb = vec![0u8; 3 * width * height];
    let mut covered = vec![false; width * height];
    rgb.par_chunks_mut(3 * width)
        .zip(covered.par_chunks_mut(width))
        .enumerate()
        .for_each(|(row, (out, cov))| {
            let y = origin.y + row as f64;
            let mut acc = vec![[0.0f64; 4]; width];
            let mut seen = vec![usize::MAX; width];
            for (i, (m, img)) in meshes.iter().zip(images).enumerate() {
                for b in boxes[i].iter().filter(|b| b.min.y <= y + 1e-9 && y <= b.max.y + 1e-9) {
                    let x0 = ((b.min.x - origin.x).ceil().max(0.0)) as usize;
                    let x1 = ((b.max.x - origin.x).floor() as usize).min(width - 1);
                    let quad = m.deformed_quad(b.q);
                    let orig = m.original_quad(b.q);
                    for col in x0..=x1 {
                        if seen[col] == i {
                            continue;
                        }
                        let p = Vector2::new(origin.x + col as f64, y);
                        let Some((u, v)) = inverse_bilinear(&quad, &p) else { continue };
                        let tol = 1e-9;
                        if !(-tol..=1.0 + tol).contains(&u) || !(-tol..=1.0 + tol).contains(&v) {
                            continue;
                        }
                        let s = orig[0] + Vector2::new(u * (orig[1].x - orig[0].x), v * (orig[3].y - orig[0].y));
                        let (w, h) = (img.width() as f64, img.height() as f64);
                        let weight = (s.x + 1.0).min(w - s.x).min(s.y + 1.0).min(h - s.y).max(1e-3);
                        let c = sample(img, s.x, s.y);
                        for k in 0..3 {
                            acc[col][k] += weight * c[k];
                        }
                        acc[col][3] += weight;
                        seen[col] = i;
                    }
                }
            }
            for col in 0..width {
                let a = acc[col];
                if a[3] > 0.0 {
                    cov[col] = true;
                    for k in 0..3 {
                        out[3 * col + k] = (a[k] / a[3]).round().clamp(0.0, 255.0) as u8;
                    }
                }
            }
        });
    Ok(Panorama {
        width,
        height,
        origin,
        rgb,
        covered,
    })
}
