//! Images, line segments and point matches: detected in-process or read from
//! precomputed files.

pub mod features;
pub mod lsd;
pub mod precomputed;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use features::{match_features, FeatureConfig};
pub use lsd::{detect_line_segments, LsdConfig};
pub use precomputed::{load_precomputed, Precomputed};

pub const MIN_IMAGE_SIDE: u32 = 32;

/// Identity and size of one input image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: usize,
    pub width: u32,
    pub height: u32,
}

impl ImageInfo {
    pub fn new(id: usize, width: u32, height: u32) -> Result<Self> {
        if width < MIN_IMAGE_SIDE || height < MIN_IMAGE_SIDE {
            return Err(Error::ImageTooSmall { id, width, height });
        }
        Ok(ImageInfo { id, width, height })
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    /// Inside the image padded by one pixel on every side.
    pub fn contains_padded(&self, p: &Vector2<f64>) -> bool {
        p.x >= -1.0 && p.y >= -1.0 && p.x <= self.width as f64 + 1.0 && p.y <= self.height as f64 + 1.0
    }
}

/// A loaded 8-bit image. Gray is always present; RGB when the source had color.
#[derive(Clone, Debug)]
pub struct ImageRecord {
    pub info: ImageInfo,
    pub gray: Vec<u8>,
    pub rgb: Option<Vec<u8>>,
    pub source: Option<PathBuf>,
}

impl ImageRecord {
    pub fn from_gray(id: usize, width: u32, height: u32, gray: Vec<u8>) -> Result<Self> {
        let info = ImageInfo::new(id, width, height)?;
        if gray.len() != (width * height) as usize {
            return Err(Error::InvalidConfig(format!(
                "image {id}: buffer has {} bytes for {width}x{height}",
                gray.len()
            )));
        }
        Ok(ImageRecord {
            info,
            gray,
            rgb: None,
            source: None,
        })
    }

    /// Loads a PNG or binary PPM/PGM file.
    pub fn load(id: usize, path: &Path) -> Result<Self> {
        let dynimg = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })?;
        let info = ImageInfo::new(id, dynimg.width(), dynimg.height())?;
        let gray = dynimg.to_luma8().into_raw();
        let rgb = dynimg.color().has_color().then(|| dynimg.to_rgb8().into_raw());
        Ok(ImageRecord {
            info,
            gray,
            rgb,
            source: Some(path.to_path_buf()),
        })
    }

    pub fn width(&self) -> usize {
        self.info.width as usize
    }

    pub fn height(&self) -> usize {
        self.info.height as usize
    }

    pub fn gray_f64(&self) -> Vec<f64> {
        self.gray.iter().map(|&v| v as f64).collect()
    }
}

/// A detected or ingested line segment in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSegment {
    pub p0: Vector2<f64>,
    pub p1: Vector2<f64>,
    pub strength: f64,
}

impl LineSegment {
    pub fn new(p0: Vector2<f64>, p1: Vector2<f64>, strength: f64) -> Self {
        LineSegment { p0, p1, strength }
    }

    pub fn length(&self) -> f64 {
        (self.p1 - self.p0).norm()
    }

    pub fn midpoint(&self) -> Vector2<f64> {
        (self.p0 + self.p1) * 0.5
    }

    pub fn direction(&self) -> Vector2<f64> {
        (self.p1 - self.p0) / self.length().max(1e-300)
    }
}

/// One correspondence between images `i` and `j` of an edge `(i, j)`, `i < j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMatch {
    pub pi: Vector2<f64>,
    pub pj: Vector2<f64>,
}

/// Matches per unordered image pair, keyed `(i, j)` with `i < j`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchSet {
    pub edges: BTreeMap<(usize, usize), Vec<PointMatch>>,
}

impl MatchSet {
    /// Inserts matches for `(a, b)`, swapping sides so the key is ordered.
    /// Duplicate source points keep their first occurrence.
    pub fn insert(&mut self, a: usize, b: usize, matches: Vec<PointMatch>) {
        let (key, swapped) = if a < b { ((a, b), false) } else { ((b, a), true) };
        let mut seen: Vec<(u64, u64)> = Vec::with_capacity(matches.len());
        let mut out = Vec::with_capacity(matches.len());
        for m in matches {
            let m = if swapped { PointMatch { pi: m.pj, pj: m.pi } } else { m };
            let k = (m.pi.x.to_bits(), m.pi.y.to_bits());
            if !seen.contains(&k) {
                seen.push(k);
                out.push(m);
            }
        }
        self.edges.insert(key, out);
    }

    /// Matches of `(a, b)` oriented so `pi` lies in `a`.
    pub fn get(&self, a: usize, b: usize) -> Option<Vec<PointMatch>> {
        if a < b {
            self.edges.get(&(a, b)).cloned()
        } else {
            self.edges
                .get(&(b, a))
                .map(|v| v.iter().map(|m| PointMatch { pi: m.pj, pj: m.pi }).collect())
        }
    }
}

/// Separable Gaussian blur with clamped borders.
pub(crate) fn gaussian_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * src[y * w + clamp(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * tmp[clamp(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_small_rejected() {
        assert!(matches!(
            ImageRecord::from_gray(3, 31, 40, vec![0; 31 * 40]),
            Err(Error::ImageTooSmall { id: 3, .. })
        ));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = image::GrayImage::from_fn(40, 33, |x, y| image::Luma([(x * 3 + y) as u8]));
        img.save(&path).unwrap();
        let rec = ImageRecord::load(0, &path).unwrap();
        assert_eq!((rec.width(), rec.height()), (40, 33));
        assert_eq!(rec.gray, img.into_raw());
        assert!(rec.rgb.is_none());
    }

    #[test]
    fn match_set_orients_and_dedups() {
        let m = |a: f64, b: f64| PointMatch {
            pi: Vector2::new(a, 0.0),
            pj: Vector2::new(b, 0.0),
        };
        let mut set = MatchSet::default();
        set.insert(2, 1, vec![m(5.0, 1.0), m(6.0, 1.0), m(7.0, 2.0)]);
        let e = &set.edges[&(1, 2)];
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].pi.x, 1.0);
        assert_eq!(set.get(2, 1).unwrap()[0].pi.x, 5.0);
    }

    #[test]
    fn blur_preserves_constant() {
        let out = gaussian_blur(&vec![7.0; 50], 10, 5, 1.2);
        assert!(out.iter().all(|v| (v - 7.0).abs() < 1e-12));
    }
}
