//! Vanishing points of one image: RANSAC clustering of segments, then the
//! orthogonal triplet that best explains them.
//!
//! Points are handled in homogeneous coordinates centered on the principal
//! point (the image center) and scaled by the half-diagonal, so vanishing
//! points at infinity need no special casing.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::UnitVec3;
use crate::ingest::{ImageInfo, LineSegment};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VpConfig {
    /// Consensus tolerance between a segment and the line from its midpoint
    /// to the candidate, degrees.
    pub angle_tolerance_deg: f64,
    pub min_support: usize,
    pub min_segments: usize,
    pub ransac_iterations: usize,
    pub max_candidates: usize,
    /// Valid focal range as multiples of the image width.
    pub focal_min_frac: f64,
    pub focal_max_frac: f64,
    /// Largest |cos| between two lifted directions accepted as orthogonal.
    pub max_pair_cos: f64,
    /// Smallest fraction of all segments the chosen triplet must explain;
    /// below it the scene is not treated as Manhattan.
    pub min_coverage: f64,
    pub seed: u64,
}

impl Default for VpConfig {
    fn default() -> Self {
        VpConfig {
            angle_tolerance_deg: 2.0,
            min_support: 5,
            min_segments: 10,
            ransac_iterations: 1500,
            max_candidates: 6,
            focal_min_frac: 0.3,
            focal_max_frac: 5.0,
            max_pair_cos: 0.2,
            min_coverage: 0.25,
            seed: 0,
        }
    }
}

/// Normalized image frame: `p_n = (p - c) / scale`.
#[derive(Clone, Copy, Debug)]
struct Frame {
    center: Vector2<f64>,
    scale: f64,
}

impl Frame {
    fn new(info: &ImageInfo) -> Self {
        Frame {
            center: info.center(),
            scale: info.diagonal() / 2.0,
        }
    }

    fn point(&self, p: &Vector2<f64>) -> Vector3<f64> {
        let q = (p - self.center) / self.scale;
        Vector3::new(q.x, q.y, 1.0)
    }
}

/// A vanishing-point hypothesis with the segments that support it.
#[derive(Clone, Debug, PartialEq)]
pub struct VpCandidate {
    /// Unit homogeneous point in the normalized frame.
    pub point: Vector3<f64>,
    pub inliers: Vec<usize>,
    frame_center: Vector2<f64>,
    frame_scale: f64,
}

impl VpCandidate {
    /// Pixel position, `None` when at infinity.
    pub fn pixel(&self) -> Option<Vector2<f64>> {
        let p = self.point;
        if p.z.abs() < 1e-12 {
            return None;
        }
        Some(Vector2::new(p.x / p.z, p.y / p.z) * self.frame_scale + self.frame_center)
    }

    /// Image direction of the point (meaningful at infinity).
    pub fn direction(&self) -> Vector2<f64> {
        Vector2::new(self.point.x, self.point.y).normalize()
    }

    /// Principal-point centered pixel coordinates, homogeneous.
    fn centered(&self) -> Vector3<f64> {
        Vector3::new(self.point.x * self.frame_scale, self.point.y * self.frame_scale, self.point.z)
    }
}

struct SegLines {
    /// Normalized lines `(a, b, c)` with `a^2 + b^2 = 1`.
    lines: Vec<Vector3<f64>>,
    mids: Vec<Vector3<f64>>,
    dirs: Vec<Vector2<f64>>,
    weights: Vec<f64>,
}

impl SegLines {
    fn new(segments: &[LineSegment], frame: &Frame) -> Self {
        let mut out = SegLines {
            lines: Vec::new(),
            mids: Vec::new(),
            dirs: Vec::new(),
            weights: Vec::new(),
        };
        for s in segments {
            let (a, b) = (frame.point(&s.p0), frame.point(&s.p1));
            let l = a.cross(&b);
            let n = l.x.hypot(l.y);
            out.lines.push(if n > 0.0 { l / n } else { Vector3::zeros() });
            out.mids.push((a + b) * 0.5);
            let d = Vector2::new(b.x - a.x, b.y - a.y);
            out.dirs.push(d / d.norm().max(1e-300));
            out.weights.push(s.length());
        }
        out
    }

    /// Sine of the angle between segment `k` and the ray from its midpoint to `v`.
    fn misalignment(&self, k: usize, v: &Vector3<f64>) -> f64 {
        let m = &self.mids[k];
        let d = Vector2::new(v.x - m.x * v.z, v.y - m.y * v.z);
        let n = d.norm();
        if n < 1e-12 {
            return 1.0;
        }
        let s = &self.dirs[k];
        (s.x * d.y - s.y * d.x).abs() / n
    }
}

/// Least-squares point closest to all `lines` (smallest eigenvector).
fn refine_point(lines: &SegLines, idx: &[usize]) -> Option<Vector3<f64>> {
    let mut m = Matrix3::zeros();
    for &k in idx {
        let l = lines.lines[k];
        m += l * l.transpose() * lines.weights[k];
    }
    let eig = m.symmetric_eigen();
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let v: Vector3<f64> = eig.eigenvectors.column(imin).into();
    (v.norm() > 0.0).then(|| canonical_sign(v.normalize()))
}

/// Fixes the sign of a homogeneous point so equal points compare equal.
fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let key = if v.z.abs() > 1e-12 { v.z } else if v.x.abs() > 1e-12 { v.x } else { v.y };
    if key < 0.0 {
        -v
    } else {
        v
    }
}

/// RANSAC over segment pairs; candidates are extracted greedily, each one
/// removing its inliers before the next search.
pub fn cluster_vanishing_candidates(
    segments: &[LineSegment],
    info: &ImageInfo,
    cfg: &VpConfig,
) -> Result<Vec<VpCandidate>> {
    if segments.len() < cfg.min_segments {
        return Err(Error::TooFewSegments {
            found: segments.len(),
            required: cfg.min_segments,
        });
    }
    let frame = Frame::new(info);
    let lines = SegLines::new(segments, &frame);
    let sin_tol = cfg.angle_tolerance_deg.to_radians().sin();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (info.id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut remaining: Vec<usize> = (0..segments.len()).filter(|&k| lines.lines[k] != Vector3::zeros()).collect();
    let mut out = Vec::new();
    let consensus = |v: &Vector3<f64>, pool: &[usize]| -> Vec<usize> {
        pool.iter().copied().filter(|&k| lines.misalignment(k, v) <= sin_tol).collect()
    };
    while out.len() < cfg.max_candidates && remaining.len() >= 2 {
        let mut best: (Vec<usize>, f64) = (Vec::new(), 0.0);
        for _ in 0..cfg.ransac_iterations {
            let a = remaining[rng.random_range(0..remaining.len())];
            let b = remaining[rng.random_range(0..remaining.len())];
            if a == b {
                continue;
            }
            let v = lines.lines[a].cross(&lines.lines[b]);
            if v.norm() < 1e-9 {
                continue;
            }
            let inl = consensus(&v, &remaining);
            let score: f64 = inl.iter().map(|&k| lines.weights[k]).sum();
            if inl.len() > best.0.len() || (inl.len() == best.0.len() && score > best.1) {
                best = (inl, score);
            }
        }
        if best.0.len() < cfg.min_support {
            if out.is_empty() {
                return Err(Error::NoConsensus { best: best.0.len() });
            }
            break;
        }
        let mut inliers = best.0;
        let mut point = refine_point(&lines, &inliers).unwrap_or_else(Vector3::zeros);
        for _ in 0..3 {
            let again = consensus(&point, &remaining);
            if again.len() < cfg.min_support || again == inliers {
                break;
            }
            inliers = again;
            match refine_point(&lines, &inliers) {
                Some(p) => point = p,
                None => break,
            }
        }
        remaining.retain(|k| !inliers.contains(k));
        out.push(VpCandidate {
            point,
            inliers,
            frame_center: frame.center,
            frame_scale: frame.scale,
        });
    }
    Ok(out)
}

/// Three orthogonal vanishing directions in the camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VpTriplet {
    pub v: [UnitVec3; 3],
    pub support: [usize; 3],
    pub focal: f64,
    /// |cos| between the two detected directions before re-orthogonalization.
    pub residual: f64,
}

#[derive(Serialize)]
struct VpDump {
    v1: [f64; 3],
    v2: [f64; 3],
    v3: [f64; 3],
    focal: f64,
    residual: f64,
    support: [usize; 3],
}

impl VpTriplet {
    pub fn to_json(&self) -> serde_json::Value {
        let a = |u: &UnitVec3| [u.as_vector().x, u.as_vector().y, u.as_vector().z];
        serde_json::to_value(VpDump {
            v1: a(&self.v[0]),
            v2: a(&self.v[1]),
            v3: a(&self.v[2]),
            focal: self.focal,
            residual: self.residual,
            support: self.support,
        })
        .unwrap_or(serde_json::Value::Null)
    }
}

/// Focal length from two vanishing points, if both are finite and the
/// constraint has a positive solution.
fn pair_focal(a: &Vector3<f64>, b: &Vector3<f64>) -> Option<f64> {
    if a.z.abs() < 1e-9 || b.z.abs() < 1e-9 {
        return None;
    }
    let f2 = -(a.x / a.z * b.x / b.z + a.y / a.z * b.y / b.z);
    (f2 > 0.0).then(|| f2.sqrt())
}

fn lift(p: &Vector3<f64>, f: f64) -> Option<UnitVec3> {
    let d = UnitVec3::from_xyz(p.x, p.y, p.z * f)?;
    // forward-facing representative
    let v = d.as_vector();
    let key = if v.z.abs() > 1e-12 { v.z } else if v.x.abs() > 1e-12 { v.x } else { v.y };
    Some(if key < 0.0 { d.flipped() } else { d })
}

/// Best-supported orthogonal triplet. Pairs of candidates give the focal
/// length; with `focal_hint` the lift uses the hint instead, which also admits
/// pairs whose points are at infinity.
pub fn select_orthogonal_triplet(
    candidates: &[VpCandidate],
    segments: &[LineSegment],
    info: &ImageInfo,
    cfg: &VpConfig,
    focal_hint: Option<f64>,
) -> Result<VpTriplet> {
    if candidates.len() < 2 {
        return Err(Error::NoOrthogonalPair);
    }
    let frame = Frame::new(info);
    let lines = SegLines::new(segments, &frame);
    let sin_tol = cfg.angle_tolerance_deg.to_radians().sin();
    let w = info.width as f64;
    let (fmin, fmax) = (cfg.focal_min_frac * w, cfg.focal_max_frac * w);
    let mut best: Option<(usize, VpTriplet)> = None;
    for a in 0..candidates.len() {
        for b in a + 1..candidates.len() {
            let (pa, pb) = (candidates[a].centered(), candidates[b].centered());
            let est = pair_focal(&pa, &pb).filter(|f| (fmin..=fmax).contains(f));
            let f = match (focal_hint, est) {
                (Some(h), _) => h,
                (None, Some(f)) => f,
                (None, None) => continue,
            };
            let (Some(da), Some(db)) = (lift(&pa, f), lift(&pb, f)) else { continue };
            let cos = da.dot(&db).abs();
            if cos > cfg.max_pair_cos {
                continue;
            }
            let Some(d3) = da.cross(&db) else { continue };
            let v2 = d3.cross(&da).expect("unit vectors orthogonal by construction");
            // third direction claims unassigned segments consistent with its image
            let third = d3.as_vector();
            let p3 = Vector3::new(third.x * f / frame.scale, third.y * f / frame.scale, third.z);
            let support3 = (0..segments.len())
                .filter(|k| !candidates[a].inliers.contains(k) && !candidates[b].inliers.contains(k))
                .filter(|&k| lines.lines[k] != Vector3::zeros() && lines.misalignment(k, &p3) <= sin_tol)
                .count();
            let support = [candidates[a].inliers.len(), candidates[b].inliers.len(), support3];
            let total: usize = support.iter().sum();
            let triplet = VpTriplet {
                v: [da, lift(v2.as_vector(), 1.0).unwrap_or(v2), lift(third, 1.0).unwrap_or(d3)],
                support,
                focal: est.unwrap_or(f),
                residual: cos,
            };
            if best.as_ref().is_none_or(|(t, _)| total > *t) {
                best = Some((total, triplet));
            }
        }
    }
    let (total, triplet) = best.ok_or(Error::NoOrthogonalPair)?;
    let coverage = total as f64 / segments.len().max(1) as f64;
    if coverage < cfg.min_coverage {
        return Err(Error::WeakStructure { coverage });
    }
    Ok(triplet)
}

/// Clustering followed by triplet selection.
pub fn detect_vps(
    segments: &[LineSegment],
    info: &ImageInfo,
    cfg: &VpConfig,
    focal_hint: Option<f64>,
) -> Result<VpTriplet> {
    let candidates = cluster_vanishing_candidates(segments, info, cfg)?;
    select_orthogonal_triplet(&candidates, segments, info, cfg, focal_hint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rot3;
    use rand_distr::{Distribution, Normal};

    fn info() -> ImageInfo {
        ImageInfo::new(0, 1000, 600).unwrap()
    }

    fn seg(x0: f64, y0: f64, x1: f64, y1: f64) -> LineSegment {
        LineSegment::new(Vector2::new(x0, y0), Vector2::new(x1, y1), 1.0)
    }

    fn pencil(center: Vector2<f64>, n: usize, rng: &mut ChaCha8Rng) -> Vec<LineSegment> {
        (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let d = Vector2::new(a.cos(), a.sin());
                let (t0, len) = (rng.random_range(40.0..200.0), rng.random_range(40.0..120.0));
                let p0 = center + d * t0;
                let p1 = center + d * (t0 + len);
                seg(p0.x, p0.y, p1.x, p1.y)
            })
            .collect()
    }

    #[test]
    fn parallel_segments_meet_at_infinity() {
        let segs: Vec<_> = (0..20).map(|k| seg(100.0 + k as f64, 20.0 + 25.0 * k as f64, 400.0, 20.0 + 25.0 * k as f64)).collect();
        let c = cluster_vanishing_candidates(&segs, &info(), &VpConfig::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].pixel().is_none_or(|p| p.norm() > 1e9));
        assert!((c[0].direction().x.abs() - 1.0).abs() < 1e-9);
        assert_eq!(c[0].inliers.len(), 20);
    }

    #[test]
    fn pencil_recovers_its_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let segs = pencil(Vector2::new(500.0, 300.0), 30, &mut rng);
        let c = cluster_vanishing_candidates(&segs, &info(), &VpConfig::default()).unwrap();
        assert!((c[0].pixel().unwrap() - Vector2::new(500.0, 300.0)).norm() < 2.0);
    }

    #[test]
    fn two_pencils_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut segs = pencil(Vector2::new(700.0, 250.0), 25, &mut rng);
        for k in 0..25 {
            let x = 50.0 + 35.0 * k as f64;
            segs.push(seg(x, 100.0 + (k % 5) as f64 * 20.0, x, 300.0 + (k % 3) as f64 * 50.0));
        }
        let c = cluster_vanishing_candidates(&segs, &info(), &VpConfig::default()).unwrap();
        assert!(c.len() >= 2);
        let finite = c.iter().find(|v| v.pixel().is_some_and(|p| (p - Vector2::new(700.0, 250.0)).norm() < 5.0)).unwrap();
        let vertical = c.iter().find(|v| v.direction().y.abs() > 0.999).unwrap();
        let good_f = finite.inliers.iter().filter(|&&k| k < 25).count();
        let good_v = vertical.inliers.iter().filter(|&&k| k >= 25).count();
        assert!(good_f as f64 >= 0.9 * 25.0 && good_v as f64 >= 0.9 * 25.0);
    }

    #[test]
    fn too_few_and_no_consensus() {
        let segs: Vec<_> = (0..5).map(|k| seg(0.0, k as f64 * 10.0, 50.0, k as f64 * 10.0)).collect();
        assert!(matches!(
            cluster_vanishing_candidates(&segs, &info(), &VpConfig::default()),
            Err(Error::TooFewSegments { .. })
        ));
        // 12 segments tangent to a circle: no three lines concurrent
        let segs: Vec<_> = (0..12)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 6.0;
                let (c, d) = (Vector2::new(500.0, 300.0) + Vector2::new(a.cos(), a.sin()) * 200.0, Vector2::new(-a.sin(), a.cos()));
                seg(c.x - d.x * 30.0, c.y - d.y * 30.0, c.x + d.x * 30.0, c.y + d.y * 30.0)
            })
            .collect();
        assert!(matches!(
            cluster_vanishing_candidates(&segs, &info(), &VpConfig::default()),
            Err(Error::NoConsensus { .. })
        ));
    }

    /// Projects random axis-aligned 3D segments through a camera `x = R X`.
    fn manhattan_segments(r: &Rot3, f: f64, per_axis: usize, noise: f64, seed: u64) -> Vec<LineSegment> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, noise.max(1e-12)).unwrap();
        let c = info().center();
        let project = |x: Vector3<f64>| {
            let q = r.apply(&x);
            (q.z > 0.1).then(|| Vector2::new(f * q.x / q.z + c.x, f * q.y / q.z + c.y))
        };
        let mut out = Vec::new();
        for axis in 0..3 {
            let mut made = 0;
            while made < per_axis {
                let forward = r.transpose().apply(&Vector3::z());
                let p = forward * rng.random_range(8.0..20.0)
                    + Vector3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
                let mut d = Vector3::zeros();
                d[axis] = rng.random_range(1.5..4.0);
                let (Some(a), Some(b)) = (project(p), project(p + d)) else { continue };
                let inside = |q: &Vector2<f64>| q.x >= 0.0 && q.y >= 0.0 && q.x <= 1000.0 && q.y <= 600.0;
                if !inside(&a) || !inside(&b) || (a - b).norm() < 30.0 {
                    continue;
                }
                let jitter = |q: Vector2<f64>, rng: &mut ChaCha8Rng| {
                    if noise > 0.0 { q + Vector2::new(nd.sample(rng), nd.sample(rng)) } else { q }
                };
                let (a, b) = (jitter(a, &mut rng), jitter(b, &mut rng));
                out.push(seg(a.x, a.y, b.x, b.y));
                made += 1;
            }
        }
        out
    }

    fn generic_camera() -> Rot3 {
        Rot3::rz(0.1) * Rot3::rx(-0.35) * Rot3::ry(0.7)
    }

    fn axis_errors(t: &VpTriplet, r: &Rot3) -> [f64; 3] {
        let mut errs = [f64::INFINITY; 3];
        for (k, e) in errs.iter_mut().enumerate() {
            let truth = UnitVec3::new(r.apply(&Vector3::ith(k, 1.0))).unwrap();
            *e = t.v.iter().map(|v| v.axis_angle(&truth).to_degrees()).fold(f64::INFINITY, f64::min);
        }
        errs
    }

    #[test]
    fn cube_render_recovers_focal_and_axes() {
        let r = generic_camera();
        let segs = manhattan_segments(&r, 800.0, 40, 0.0, 3);
        let t = detect_vps(&segs, &info(), &VpConfig::default(), None).unwrap();
        assert!((t.focal - 800.0).abs() < 40.0, "focal {}", t.focal);
        for e in axis_errors(&t, &r) {
            assert!(e < 1.0, "{e}");
        }
    }

    #[test]
    fn noisy_render_within_two_degrees() {
        for seed in 0..5 {
            let r = generic_camera() * Rot3::ry(seed as f64 * 0.05);
            let segs = manhattan_segments(&r, 800.0, 30, 1.0, 10 + seed);
            let t = detect_vps(&segs, &info(), &VpConfig::default(), None).unwrap();
            for e in axis_errors(&t, &r) {
                assert!(e < 2.0, "seed {seed}: {e}");
            }
        }
    }

    #[test]
    fn triplet_is_orthonormal() {
        let segs = manhattan_segments(&generic_camera(), 800.0, 30, 1.0, 4);
        let t = detect_vps(&segs, &info(), &VpConfig::default(), None).unwrap();
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(t.v[i].dot(&t.v[j]).abs() < 1e-6);
            }
        }
    }

    fn candidate(px: Vector2<f64>, n: usize) -> VpCandidate {
        let frame = Frame::new(&info());
        VpCandidate {
            point: frame.point(&px).normalize(),
            inliers: (0..n).collect(),
            frame_center: frame.center,
            frame_scale: frame.scale,
        }
    }

    #[test]
    fn same_side_pair_has_no_focal() {
        let c = [candidate(Vector2::new(900.0, 300.0), 10), candidate(Vector2::new(800.0, 320.0), 8)];
        assert!(matches!(
            select_orthogonal_triplet(&c, &[], &info(), &VpConfig::default(), None),
            Err(Error::NoOrthogonalPair)
        ));
    }

    #[test]
    fn exactly_orthogonal_candidates() {
        // centered points (400, 0) and (-1600, 0): f^2 = 640000
        let c = [candidate(Vector2::new(900.0, 300.0), 10), candidate(Vector2::new(-1100.0, 300.0), 8)];
        let t = select_orthogonal_triplet(&c, &[], &info(), &VpConfig::default(), None).unwrap();
        assert!((t.focal - 800.0).abs() < 1e-9);
        assert!(t.residual < 1e-9);
    }

    #[test]
    fn triplet_must_explain_enough_segments() {
        let c = [candidate(Vector2::new(900.0, 300.0), 10), candidate(Vector2::new(-1100.0, 300.0), 8)];
        let clutter: Vec<_> = (0..100).map(|k| seg(k as f64, 0.0, k as f64 + 3.0, 40.0)).collect();
        assert!(matches!(
            select_orthogonal_triplet(&c, &clutter, &info(), &VpConfig::default(), None),
            Err(Error::WeakStructure { coverage }) if coverage < 0.25
        ));
        let lax = VpConfig { min_coverage: 0.0, ..VpConfig::default() };
        assert!(select_orthogonal_triplet(&c, &clutter, &info(), &lax, None).is_ok());
    }

    #[test]
    fn focal_invariant_to_quarter_turn() {
        let segs = manhattan_segments(&generic_camera(), 800.0, 30, 0.5, 6);
        let c = info().center();
        // 90 degree turn about the principal point of a square-padded frame
        let turned: Vec<_> = segs
            .iter()
            .map(|s| {
                let rot = |p: Vector2<f64>| c + Vector2::new(-(p.y - c.y), p.x - c.x);
                LineSegment::new(rot(s.p0), rot(s.p1), s.strength)
            })
            .collect();
        let big = ImageInfo::new(0, 1000, 600).unwrap();
        let a = detect_vps(&segs, &big, &VpConfig::default(), None).unwrap();
        let b = detect_vps(&turned, &big, &VpConfig::default(), None).unwrap();
        assert!((a.focal - b.focal).abs() < 1e-6 * a.focal, "{} vs {}", a.focal, b.focal);
    }

    #[test]
    fn hint_admits_points_at_infinity() {
        // level camera facing an axis: horizontal and vertical VPs at infinity
        let r = Rot3::rx(-std::f64::consts::FRAC_PI_2) * Rot3::rz(0.0);
        let segs = manhattan_segments(&(Rot3::ry(0.0) * r), 700.0, 30, 0.0, 8);
        let cfg = VpConfig::default();
        let hinted = detect_vps(&segs, &info(), &cfg, Some(700.0)).unwrap();
        for e in axis_errors(&hinted, &r) {
            assert!(e < 1.0, "{e}");
        }
    }
}
