//! Procedural rotation-only scenes with known extrinsics.
//!
//! Cameras sit at the world origin; world `z` points down. A level camera
//! with pan `p` looks along `(cos p, sin p, 0)`; roll `r` turns the image so
//! that `R = Rz(-r) Rx(t) L(p)^T` for tilt `t`, and the straightening image
//! rotation is `-r`.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Rot3;
use crate::ingest::features::MIN_MATCHES;
use crate::ingest::precomputed::{matches_file_name, read_json, segments_file_name, write_json, write_matches, write_segments};
use crate::ingest::{ImageInfo, ImageRecord, LineSegment, MatchSet, PointMatch};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneMode {
    /// Axis-aligned wireframe boxes.
    #[default]
    Manhattan,
    /// Segments with uniformly random 3D directions.
    RandomLines,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneOutput {
    /// Segments and matches only.
    #[default]
    Analytic,
    /// Segments and matches plus rendered line drawings.
    Raster,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub cameras: usize,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    /// Horizontal overlap of neighbouring views; sets the pan step unless
    /// `pan_step_deg` is given.
    pub overlap: f64,
    pub pan_step_deg: Option<f64>,
    /// Rolls are uniform in `[-roll_range_deg, roll_range_deg]`.
    pub roll_range_deg: f64,
    pub tilt_range_deg: f64,
    pub mode: SceneMode,
    pub output: SceneOutput,
    /// Boxes in manhattan mode; groups of 12 segments in random-lines mode.
    pub structures: usize,
    /// Scene points from which matches are drawn.
    pub points: usize,
    pub max_matches_per_edge: usize,
    pub min_matches_per_edge: usize,
    pub min_segment_px: f64,
    pub segment_noise_px: f64,
    pub match_noise_px: f64,
    /// Standard deviation of a per-image rotation applied to the segments only.
    pub vp_noise_deg: f64,
    /// Fraction of images whose segments are rendered rolled by
    /// `±vp_outlier_deg`.
    pub vp_outlier_fraction: f64,
    pub vp_outlier_deg: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            cameras: 8,
            width: 640,
            height: 480,
            focal: 600.0,
            overlap: 0.5,
            pan_step_deg: None,
            roll_range_deg: 10.0,
            tilt_range_deg: 0.0,
            mode: SceneMode::Manhattan,
            output: SceneOutput::Analytic,
            structures: 400,
            points: 3000,
            max_matches_per_edge: 200,
            min_matches_per_edge: 20,
            min_segment_px: 15.0,
            segment_noise_px: 0.0,
            match_noise_px: 0.0,
            vp_noise_deg: 0.0,
            vp_outlier_fraction: 0.0,
            vp_outlier_deg: 20.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Reads and validates a spec file; malformed content is an invalid spec.
    pub fn read(path: &Path) -> Result<Self> {
        let spec: SynthSpec = read_json(path).map_err(|e| match e {
            Error::Format { file, context } => Error::InvalidSpec(format!("{file}: {context}")),
            e => e,
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if !(2..=72).contains(&self.cameras) {
            return bad(format!("cameras must be in 2..=72, got {}", self.cameras));
        }
        if !(self.overlap > 0.0 && self.overlap < 1.0) {
            return bad(format!("overlap must be in (0, 1), got {}", self.overlap));
        }
        if self.width < crate::ingest::MIN_IMAGE_SIDE || self.height < crate::ingest::MIN_IMAGE_SIDE {
            return bad(format!("image size {}x{} below the minimum side", self.width, self.height));
        }
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return bad(format!("focal must be positive, got {}", self.focal));
        }
        if let Some(p) = self.pan_step_deg {
            if !(p.is_finite() && p > 0.0 && p < 180.0) {
                return bad(format!("pan_step_deg must be in (0, 180), got {p}"));
            }
        }
        if !(0.0..=1.0).contains(&self.vp_outlier_fraction) {
            return bad(format!("vp_outlier_fraction must be in [0, 1], got {}", self.vp_outlier_fraction));
        }
        let nonneg = [
            ("roll_range_deg", self.roll_range_deg),
            ("tilt_range_deg", self.tilt_range_deg),
            ("min_segment_px", self.min_segment_px),
            ("segment_noise_px", self.segment_noise_px),
            ("match_noise_px", self.match_noise_px),
            ("vp_noise_deg", self.vp_noise_deg),
            ("vp_outlier_deg", self.vp_outlier_deg),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.roll_range_deg >= 45.0 || self.tilt_range_deg >= 60.0 {
            return bad("roll range must stay below 45 and tilt below 60 degrees".into());
        }
        if self.min_matches_per_edge < MIN_MATCHES || self.max_matches_per_edge < self.min_matches_per_edge {
            return bad(format!(
                "need {MIN_MATCHES} <= min_matches_per_edge <= max_matches_per_edge, got {} and {}",
                self.min_matches_per_edge, self.max_matches_per_edge
            ));
        }
        Ok(())
    }

    pub fn horizontal_fov(&self) -> f64 {
        2.0 * (self.width as f64 / (2.0 * self.focal)).atan()
    }

    pub fn vertical_fov(&self) -> f64 {
        2.0 * (self.height as f64 / (2.0 * self.focal)).atan()
    }

    pub fn pan_step(&self) -> f64 {
        self.pan_step_deg.map_or((1.0 - self.overlap) * self.horizontal_fov(), f64::to_radians)
    }
}

/// Ground truth of a generated scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneTruth {
    /// World-to-camera rotations, row-major.
    pub rotations: Vec<[f64; 9]>,
    pub focals: Vec<f64>,
    pub rolls_deg: Vec<f64>,
    pub pans_deg: Vec<f64>,
    pub tilts_deg: Vec<f64>,
    /// Offsets added to each image's straightening angle by VP outlier
    /// injection; zero for clean images.
    pub alpha_offsets_deg: Vec<f64>,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub mode: SceneMode,
}

impl SceneTruth {
    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    pub fn rotation(&self, i: usize) -> Result<Rot3> {
        Rot3::from_row_major(&self.rotations[i])
    }

    pub fn rotations(&self) -> Result<Vec<Rot3>> {
        (0..self.len()).map(|i| self.rotation(i)).collect()
    }

    /// Image rotations that straighten each view.
    pub fn theta_deg(&self) -> Vec<f64> {
        self.rolls_deg.iter().map(|r| -r).collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let t: SceneTruth = read_json(path)?;
        let n = t.rotations.len();
        if [t.focals.len(), t.rolls_deg.len(), t.pans_deg.len(), t.tilts_deg.len(), t.alpha_offsets_deg.len()]
            .iter()
            .any(|&k| k != n)
        {
            return Err(Error::Format {
                file: path.display().to_string(),
                context: "per-camera arrays differ in length".into(),
            });
        }
        for i in 0..n {
            t.rotation(i).map_err(|e| Error::Format {
                file: path.display().to_string(),
                context: format!("rotation {i}: {e}"),
            })?;
        }
        Ok(t)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub truth: SceneTruth,
    pub infos: Vec<ImageInfo>,
    pub segments: Vec<Vec<LineSegment>>,
    pub matches: MatchSet,
    /// Rendered line drawings in raster mode.
    pub images: Option<Vec<ImageRecord>>,
}

pub fn camera_rotation(pan: f64, tilt: f64, roll: f64) -> Rot3 {
    let (s, c) = pan.sin_cos();
    let level = Matrix3::from_columns(&[Vector3::new(-s, c, 0.0), Vector3::new(0.0, 0.0, 1.0), Vector3::new(c, s, 0.0)]);
    Rot3::rz(-roll) * Rot3::rx(tilt) * Rot3::from_matrix(level.transpose()).expect("level frame is a rotation")
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Signed offsets for a seeded subset of `ceil(fraction * n)` images.
pub fn alpha_offsets(n: usize, fraction: f64, magnitude_deg: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, 0xA1FA);
    let count = ((fraction.clamp(0.0, 1.0) * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut out = vec![0.0; n];
    let mut chosen = sample(&mut rng, n, count.min(n)).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        out[i] = if rng.random_bool(0.5) { magnitude_deg } else { -magnitude_deg };
    }
    out
}

/// Straightening angles with a seeded subset perturbed by `±magnitude_deg`.
pub fn inject_alpha_noise(alpha_deg: &[f64], fraction: f64, magnitude_deg: f64, seed: u64) -> Vec<f64> {
    alpha_offsets(alpha_deg.len(), fraction, magnitude_deg, seed)
        .iter()
        .zip(alpha_deg)
        .map(|(o, a)| a + o)
        .collect()
}

fn band_direction(rng: &mut ChaCha8Rng, max_elevation: f64) -> Vector3<f64> {
    let az = rng.random_range(0.0..TAU);
    let el = rng.random_range(-max_elevation.sin()..=max_elevation.sin()).asin();
    Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

fn world_segments(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<[Vector3<f64>; 2]> {
    let band = spec.vertical_fov() / 2.0 + spec.tilt_range_deg.to_radians() + 10f64.to_radians();
    let band = band.min(PI / 2.0 - 1e-3);
    let mut out = Vec::with_capacity(12 * spec.structures);
    for _ in 0..spec.structures {
        let center = band_direction(rng, band) * rng.random_range(8.0..15.0);
        match spec.mode {
            SceneMode::Manhattan => {
                let half = Vector3::new(rng.random_range(0.25..1.5), rng.random_range(0.25..1.5), rng.random_range(0.25..1.5));
                for axis in 0..3 {
                    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                    for (su, sv) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
                        let mut a = center;
                        a[u] += su * half[u];
                        a[v] += sv * half[v];
                        let mut b = a;
                        a[axis] -= half[axis];
                        b[axis] += half[axis];
                        out.push([a, b]);
                    }
                }
            }
            SceneMode::RandomLines => {
                for _ in 0..12 {
                    let d = Vector3::from_fn(|_, _| StandardNormal.sample(rng)).normalize();
                    let offset = Vector3::from_fn(|_, _| rng.random_range(-1.5..1.5));
                    let half = rng.random_range(0.5..1.5);
                    out.push([center + offset - d * half, center + offset + d * half]);
                }
            }
        }
    }
    out
}

fn project(spec: &SynthSpec, x: &Vector3<f64>) -> Vector2<f64> {
    let c = Vector2::new(spec.width as f64 / 2.0, spec.height as f64 / 2.0);
    c + Vector2::new(x.x, x.y) * (spec.focal / x.z)
}

/// Clips `a + t (b - a)`, `t` in `[0, 1]`, to the rectangle; Liang-Barsky.
fn clip_to_rect(a: Vector2<f64>, b: Vector2<f64>, w: f64, h: f64) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-d.x, a.x), (d.x, w - a.x), (-d.y, a.y), (d.y, h - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    (t0 < t1).then(|| (a + d * t0, a + d * t1))
}

fn image_segment(spec: &SynthSpec, r: &Rot3, s: &[Vector3<f64>; 2]) -> Option<LineSegment> {
    let near = 1e-2;
    let (mut a, mut b) = (r.apply(&s[0]), r.apply(&s[1]));
    if a.z < near && b.z < near {
        return None;
    }
    if a.z < near {
        a = b + (a - b) * ((b.z - near) / (b.z - a.z));
    } else if b.z < near {
        b = a + (b - a) * ((a.z - near) / (a.z - b.z));
    }
    let (p, q) = clip_to_rect(project(spec, &a), project(spec, &b), spec.width as f64, spec.height as f64)?;
    let seg = LineSegment::new(p, q, 1.0);
    (seg.length() >= spec.min_segment_px).then_some(seg)
}

fn clamp_to_image(p: Vector2<f64>, spec: &SynthSpec) -> Vector2<f64> {
    Vector2::new(p.x.clamp(0.0, spec.width as f64), p.y.clamp(0.0, spec.height as f64))
}

fn small_rotation(rng: &mut ChaCha8Rng, sigma_deg: f64) -> Rot3 {
    if sigma_deg == 0.0 {
        return Rot3::identity();
    }
    let n = Normal::new(0.0, sigma_deg.to_radians()).expect("finite sigma");
    Rot3::from_axis_angle(&Vector3::from_fn(|_, _| n.sample(rng)))
}

/// Builds cameras, structures, segments and matches from the spec. The
/// same spec always yields the same scene.
pub fn generate_scene(spec: &SynthSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let n = spec.cameras;
    let mut rng = rng_for(spec.seed, 0);
    let step = spec.pan_step();
    let pans: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
    let rolls: Vec<f64> = (0..n)
        .map(|_| if spec.roll_range_deg > 0.0 { rng.random_range(-spec.roll_range_deg..=spec.roll_range_deg) } else { 0.0 })
        .collect();
    let tilts: Vec<f64> = (0..n)
        .map(|_| if spec.tilt_range_deg > 0.0 { rng.random_range(-spec.tilt_range_deg..=spec.tilt_range_deg) } else { 0.0 })
        .collect();
    let rotations: Vec<Rot3> = (0..n)
        .map(|i| camera_rotation(pans[i], tilts[i].to_radians(), rolls[i].to_radians()))
        .collect();
    let offsets = alpha_offsets(n, spec.vp_outlier_fraction, spec.vp_outlier_deg, spec.seed);

    let structures = world_segments(spec, &mut rng);
    let band = (spec.vertical_fov() / 2.0 + spec.tilt_range_deg.to_radians() + 5f64.to_radians()).min(PI / 2.0 - 1e-3);
    let points: Vec<Vector3<f64>> = (0..spec.points).map(|_| band_direction(&mut rng, band)).collect();

    let infos: Vec<ImageInfo> = (0..n).map(|i| ImageInfo::new(i, spec.width, spec.height)).collect::<Result<_>>()?;
    let segments: Vec<Vec<LineSegment>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(spec.seed, 1 + i as u64);
            // segments see a perturbed camera so their VPs carry the injected error
            let seen = Rot3::rz(offsets[i].to_radians()) * small_rotation(&mut rng, spec.vp_noise_deg) * rotations[i];
            let noise = Normal::new(0.0, spec.segment_noise_px.max(1e-300)).expect("finite sigma");
            structures
                .iter()
                .filter_map(|s| image_segment(spec, &seen, s))
                .map(|s| {
                    if spec.segment_noise_px == 0.0 {
                        return s;
                    }
                    let mut jitter = |p: Vector2<f64>| clamp_to_image(p + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng)), spec);
                    LineSegment::new(jitter(s.p0), jitter(s.p1), s.strength)
                })
                .collect()
        })
        .collect();

    let visible = |i: usize, x: &Vector3<f64>| -> Option<Vector2<f64>> {
        let c = rotations[i].apply(x);
        if c.z <= 1e-6 {
            return None;
        }
        let p = project(spec, &c);
        (p.x >= 0.0 && p.y >= 0.0 && p.x <= spec.width as f64 && p.y <= spec.height as f64).then_some(p)
    };
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let edges: Vec<((usize, usize), Vec<PointMatch>)> = pairs
        .par_iter()
        .filter_map(|&(i, j)| {
            let mut rng = rng_for(spec.seed, 1_000_000 + (i * n + j) as u64);
            let mut ms: Vec<PointMatch> = points
                .iter()
                .filter_map(|x| Some(PointMatch { pi: visible(i, x)?, pj: visible(j, x)? }))
                .take(spec.max_matches_per_edge)
                .collect();
            if ms.len() < spec.min_matches_per_edge {
                return None;
            }
            if spec.match_noise_px > 0.0 {
                let noise = Normal::new(0.0, spec.match_noise_px).expect("finite sigma");
                for m in &mut ms {
                    m.pi = clamp_to_image(m.pi + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng)), spec);
                    m.pj = clamp_to_image(m.pj + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng)), spec);
                }
            }
            Some(((i, j), ms))
        })
        .collect();
    let mut matches = MatchSet::default();
    for ((i, j), ms) in edges {
        matches.insert(i, j, ms);
    }

    let images = match spec.output {
        SceneOutput::Analytic => None,
        SceneOutput::Raster => Some(
            infos
                .par_iter()
                .zip(&segments)
                .map(|(info, segs)| render_segments(info, segs))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    let truth = SceneTruth {
        rotations: rotations.iter().map(Rot3::to_row_major).collect(),
        focals: vec![spec.focal; n],
        rolls_deg: rolls,
        pans_deg: pans.iter().map(|p| p.to_degrees()).collect(),
        tilts_deg: tilts,
        alpha_offsets_deg: offsets,
        width: spec.width,
        height: spec.height,
        seed: spec.seed,
        mode: spec.mode,
    };
    Ok(SyntheticScene {
        truth,
        infos,
        segments,
        matches,
        images,
    })
}

/// Dark anti-aliased strokes, 1.5 px wide, on a white canvas.
pub fn render_segments(info: &ImageInfo, segments: &[LineSegment]) -> Result<ImageRecord> {
    let (w, h) = (info.width as usize, info.height as usize);
    let mut ink = vec![0.0f64; w * h];
    let half = 0.75;
    for s in segments {
        let (lo, hi) = (s.p0.inf(&s.p1), s.p0.sup(&s.p1));
        let x0 = (lo.x - half - 1.0).floor().max(0.0) as usize;
        let y0 = (lo.y - half - 1.0).floor().max(0.0) as usize;
        let x1 = ((hi.x + half + 1.0).ceil() as usize).min(w.saturating_sub(1));
        let y1 = ((hi.y + half + 1.0).ceil() as usize).min(h.saturating_sub(1));
        let d = s.p1 - s.p0;
        let len2 = d.norm_squared().max(1e-12);
        for y in y0..=y1 {
            for x in x0..=x1 {
                // pixel centers sit at half-integers
                let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                let t = ((p - s.p0).dot(&d) / len2).clamp(0.0, 1.0);
                let dist = (p - (s.p0 + d * t)).norm();
                let cover = (half + 0.5 - dist).clamp(0.0, 1.0);
                let k = y * w + x;
                ink[k] = ink[k].max(cover);
            }
        }
    }
    let gray = ink.iter().map(|c| (255.0 * (1.0 - c)).round() as u8).collect();
    ImageRecord::from_gray(info.id, info.width, info.height, gray)
}

pub fn image_file_name(id: usize) -> String {
    format!("image_{id}.png")
}

/// Writes segments, matches, `truth.json` and, in raster mode, the images.
pub fn write_scene(dir: &Path, scene: &SyntheticScene) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, segs) in scene.segments.iter().enumerate() {
        write_segments(&dir.join(segments_file_name(i)), segs)?;
    }
    for (&(i, j), ms) in &scene.matches.edges {
        write_matches(&dir.join(matches_file_name(i, j)), ms)?;
    }
    if let Some(images) = &scene.images {
        for img in images {
            let path = dir.join(image_file_name(img.info.id));
            image::save_buffer(&path, &img.gray, img.info.width, img.info.height, image::ColorType::L8).map_err(|e| {
                Error::Image {
                    path: path.clone(),
                    message: e.to_string(),
                }
            })?;
        }
    }
    scene.truth.write(&dir.join("truth.json"))
}
