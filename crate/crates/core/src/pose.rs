//! Stitch graph, rotation-only camera poses and relative rolls.
//!
//! Rotations map world to camera (`x_cam = R_i X`); the reference camera's
//! frame is the world frame, so `R_r = I`. Camera frames are x right, y down,
//! z forward, with the principal point at the image center.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{closest_z_rotation, ransac_homography, skew, Angle2D, Homography, Rot3, SparseLsqProblem};
use crate::ingest::features::MIN_MATCHES;
use crate::ingest::{ImageInfo, MatchSet, PointMatch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseConfig {
    pub min_inliers: usize,
    pub min_inlier_ratio: f64,
    pub ransac_threshold: f64,
    pub ransac_iterations: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Refine the shared focal by minimizing rotation-induced transfer error.
    pub refine_focal: bool,
    pub seed: u64,
}

impl Default for PoseConfig {
    fn default() -> Self {
        PoseConfig {
            min_inliers: MIN_MATCHES,
            min_inlier_ratio: 0.3,
            ransac_threshold: 3.0,
            ransac_iterations: 1000,
            max_iterations: 100,
            tolerance: 1e-8,
            refine_focal: true,
            seed: 0,
        }
    }
}

/// How edges are chosen.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum EdgeSelection {
    /// Every matched pair passing the inlier floors.
    #[default]
    Auto,
    /// Exactly these pairs.
    Manual(Vec<(usize, usize)>),
}

#[derive(Clone, Debug)]
pub struct StitchEdge {
    pub a: usize,
    pub b: usize,
    /// RANSAC inliers, `pi` in `a`.
    pub matches: Vec<PointMatch>,
    /// Maps points of `a` to points of `b`.
    pub homography: Homography,
    pub candidate_matches: usize,
    /// Relative roll from `a` to `b`, set by [`assign_relative_rolls`].
    pub beta: Angle2D,
}

#[derive(Clone, Debug)]
pub struct StitchGraph {
    pub nodes: Vec<ImageInfo>,
    pub edges: Vec<StitchEdge>,
    pub reference: usize,
}

impl StitchGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Neighbors of `i` in ascending order, with the index of the joining edge.
    pub fn neighbors(&self, i: usize) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .edges
            .iter()
            .enumerate()
            .filter_map(|(k, e)| {
                if e.a == i {
                    Some((e.b, k))
                } else if e.b == i {
                    Some((e.a, k))
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges.iter().position(|e| (e.a, e.b) == (i, j) || (e.a, e.b) == (j, i))
    }

    /// Relative roll `beta_ij`; antisymmetric in `(i, j)`.
    pub fn beta(&self, i: usize, j: usize) -> Option<Angle2D> {
        let e = &self.edges[self.edge_index(i, j)?];
        Some(if e.a == i { e.beta } else { -e.beta })
    }

    /// Matches of edge `(i, j)` with `pi` in `i`.
    pub fn matches(&self, i: usize, j: usize) -> Option<Vec<PointMatch>> {
        let e = &self.edges[self.edge_index(i, j)?];
        Some(if e.a == i {
            e.matches.clone()
        } else {
            e.matches.iter().map(|m| PointMatch { pi: m.pj, pj: m.pi }).collect()
        })
    }
}

fn components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Node `k` must have id `k`.
pub fn build_stitch_graph(
    images: &[ImageInfo],
    matches: &MatchSet,
    selection: &EdgeSelection,
    reference: usize,
    cfg: &PoseConfig,
) -> Result<StitchGraph> {
    for (k, im) in images.iter().enumerate() {
        if im.id != k {
            return Err(Error::InvalidConfig(format!("image ids must be 0..N in order; position {k} has id {}", im.id)));
        }
    }
    if reference >= images.len() {
        return Err(Error::InvalidConfig(format!("reference {reference} is not an image id")));
    }
    let pairs: Vec<(usize, usize)> = match selection {
        EdgeSelection::Auto => matches.edges.keys().copied().filter(|&(a, b)| b < images.len() && a < b).collect(),
        EdgeSelection::Manual(list) => {
            let mut v: Vec<(usize, usize)> = list.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
            v.sort_unstable();
            v.dedup();
            for &(a, b) in &v {
                let found = matches.edges.get(&(a, b)).map_or(0, Vec::len);
                if b >= images.len() || a == b || found < cfg.min_inliers {
                    return Err(Error::Format {
                        file: "project".into(),
                        context: format!("manual edge ({a}, {b}) has {found} matches; at least {} required", cfg.min_inliers),
                    });
                }
            }
            v
        }
    };
    let manual = matches!(selection, EdgeSelection::Manual(_));
    let fitted: Vec<Option<StitchEdge>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let ms = &matches.edges[&(a, b)];
            let src: Vec<Vector2<f64>> = ms.iter().map(|m| m.pi).collect();
            let dst: Vec<Vector2<f64>> = ms.iter().map(|m| m.pj).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((a as u64) << 32 | b as u64));
            let fit = match ransac_homography(&src, &dst, cfg.ransac_threshold, cfg.ransac_iterations, &mut rng) {
                Ok(f) => f,
                Err(e) => {
                    log::warn!("edge ({a}, {b}): homography failed: {e}");
                    return None;
                }
            };
            let ratio = fit.inliers.len() as f64 / ms.len() as f64;
            if !manual && (fit.inliers.len() < cfg.min_inliers || ratio < cfg.min_inlier_ratio) {
                log::info!("edge ({a}, {b}) rejected: {} inliers of {}", fit.inliers.len(), ms.len());
                return None;
            }
            let kept: Vec<PointMatch> = if manual { ms.clone() } else { fit.inliers.iter().map(|&k| ms[k]).collect() };
            Some(StitchEdge {
                a,
                b,
                matches: kept,
                homography: fit.homography,
                candidate_matches: ms.len(),
                beta: Angle2D::default(),
            })
        })
        .collect();
    let edges: Vec<StitchEdge> = fitted.into_iter().flatten().collect();
    let comps = components(images.len(), &edges.iter().map(|e| (e.a, e.b)).collect::<Vec<_>>());
    if comps.len() > 1 {
        return Err(Error::DisconnectedGraph { components: comps });
    }
    Ok(StitchGraph {
        nodes: images.to_vec(),
        edges,
        reference,
    })
}

/// Focal lengths implied by a homography between centered coordinates,
/// `(f_src, f_dst)`; `None` where the constraint has no positive solution.
pub fn focals_from_homography(h: &Matrix3<f64>) -> (Option<f64>, Option<f64>) {
    let h = |r: usize, c: usize| h[(r, c)];
    let pick = |v1: f64, v2: f64, d1: f64, d2: f64| -> Option<f64> {
        let (v1, v2) = if v1 < v2 { (v2, v1) } else { (v1, v2) };
        let v = if v1 > 0.0 && v2 > 0.0 {
            if d1.abs() > d2.abs() { v1 } else { v2 }
        } else if v1 > 0.0 {
            v1
        } else {
            return None;
        };
        let f = v.sqrt();
        f.is_finite().then_some(f)
    };
    // columns 1 and 2 of the rotation are orthonormal: destination focal
    let d1 = h(2, 0) * h(2, 1);
    let d2 = (h(2, 1) - h(2, 0)) * (h(2, 1) + h(2, 0));
    let v1 = -(h(0, 0) * h(0, 1) + h(1, 0) * h(1, 1)) / d1;
    let v2 = (h(0, 0).powi(2) + h(1, 0).powi(2) - h(0, 1).powi(2) - h(1, 1).powi(2)) / d2;
    let f_dst = pick(v1, v2, d1, d2);
    // rows 1 and 2 are orthonormal: source focal
    let d1 = h(0, 0) * h(1, 0) + h(0, 1) * h(1, 1);
    let d2 = h(0, 0).powi(2) + h(0, 1).powi(2) - h(1, 0).powi(2) - h(1, 1).powi(2);
    let v1 = -h(0, 2) * h(1, 2) / d1;
    let v2 = (h(1, 2).powi(2) - h(0, 2).powi(2)) / d2;
    let f_src = pick(v1, v2, d1, d2);
    (f_src, f_dst)
}

fn centering(info: &ImageInfo) -> Matrix3<f64> {
    let c = info.center();
    Matrix3::new(1.0, 0.0, -c.x, 0.0, 1.0, -c.y, 0.0, 0.0, 1.0)
}

/// Per-image rotations and the shared focal.
#[derive(Clone, Debug)]
pub struct RotationEstimate {
    pub rotations: Vec<Rot3>,
    pub focals: Vec<f64>,
    pub mean_reprojection_error: f64,
    pub reference: usize,
}

fn ray(info: &ImageInfo, f: f64, p: &Vector2<f64>) -> Vector3<f64> {
    let c = info.center();
    Vector3::new(p.x - c.x, p.y - c.y, f).normalize()
}

/// Relative rotation `R_b R_a^T` of one edge from its matched rays.
fn edge_rotation(g: &StitchGraph, e: &StitchEdge, f: f64) -> Result<Rot3> {
    let (ia, ib) = (&g.nodes[e.a], &g.nodes[e.b]);
    let m: Matrix3<f64> = e
        .matches
        .iter()
        .map(|pm| ray(ib, f, &pm.pj) * ray(ia, f, &pm.pi).transpose())
        .sum();
    Rot3::nearest(&m)
}

fn project(info: &ImageInfo, f: f64, v: &Vector3<f64>) -> Option<Vector2<f64>> {
    (v.z > 1e-9).then(|| Vector2::new(f * v.x / v.z, f * v.y / v.z) + info.center())
}

/// Mean distance between matched points and their rotation-induced transfer.
fn mean_transfer_error(g: &StitchGraph, rots: &[Rot3], f: f64) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in &g.edges {
        let rel = rots[e.b] * rots[e.a].transpose();
        for pm in &e.matches {
            let v = rel.apply(&ray(&g.nodes[e.a], f, &pm.pi));
            sum += project(&g.nodes[e.b], f, &v).map_or(1e6, |p| (p - pm.pj).norm());
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Chains relative rotations along a BFS tree from the reference.
fn chain(g: &StitchGraph, rel: &[Rot3]) -> Vec<Rot3> {
    let n = g.len();
    let mut rots = vec![Rot3::identity(); n];
    let mut seen = vec![false; n];
    seen[g.reference] = true;
    let mut q = VecDeque::from([g.reference]);
    while let Some(u) = q.pop_front() {
        for (v, k) in g.neighbors(u) {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            let e = &g.edges[k];
            // rel[k] = R_b R_a^T
            rots[v] = if e.a == u { rel[k] * rots[u] } else { rel[k].transpose() * rots[u] };
            q.push_back(v);
        }
    }
    rots
}

/// Gauss-Newton on `sum_e |R_b - Q_e R_a|_F^2` with left perturbations
/// `R_i <- exp([w_i]) R_i` and the reference held fixed.
fn average_rotations(g: &StitchGraph, rel: &[Rot3], init: Vec<Rot3>, cfg: &PoseConfig) -> Result<Vec<Rot3>> {
    let n = g.len();
    let r = g.reference;
    let var = |i: usize| -> Option<usize> {
        match i.cmp(&r) {
            std::cmp::Ordering::Less => Some(3 * i),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(3 * (i - 1)),
        }
    };
    let gens = [skew(&Vector3::x()), skew(&Vector3::y()), skew(&Vector3::z())];
    let cost = |rots: &[Rot3]| -> f64 {
        g.edges
            .iter()
            .zip(rel)
            .map(|(e, q)| (rots[e.b].matrix() - q.matrix() * rots[e.a].matrix()).norm_squared())
            .sum()
    };
    let mut rots = init;
    if n < 2 {
        return Ok(rots);
    }
    let mut current = cost(&rots);
    for _ in 0..cfg.max_iterations {
        let mut p = SparseLsqProblem::new(3 * (n - 1));
        for (e, q) in g.edges.iter().zip(rel) {
            let t = q.matrix() * rots[e.a].matrix();
            let res = rots[e.b].matrix() - t;
            let db: Vec<Matrix3<f64>> = gens.iter().map(|gk| gk * rots[e.b].matrix()).collect();
            let da: Vec<Matrix3<f64>> = (0..3)
                .map(|m| {
                    // d/dw_a[m] of -Q exp([w_a]) R_a = -[Q e_m] Q R_a
                    -(0..3).map(|k| gens[k] * t * q.matrix()[(k, m)]).sum::<Matrix3<f64>>()
                })
                .collect();
            for row in 0..3 {
                for col in 0..3 {
                    let mut entries = Vec::with_capacity(6);
                    if let Some(vb) = var(e.b) {
                        entries.extend((0..3).map(|k| (vb + k, db[k][(row, col)])));
                    }
                    if let Some(va) = var(e.a) {
                        entries.extend((0..3).map(|m| (va + m, da[m][(row, col)])));
                    }
                    p.add_row(1.0, &entries, -res[(row, col)])?;
                }
            }
        }
        let sol = crate::geom::solve_lsq(&p)?;
        let step = sol.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut next = rots.clone();
        for (i, rot) in next.iter_mut().enumerate() {
            if let Some(v) = var(i) {
                let w = Vector3::new(sol.x[v], sol.x[v + 1], sol.x[v + 2]);
                *rot = Rot3::from_axis_angle(&w) * *rot;
            }
        }
        let c = cost(&next);
        if !c.is_finite() {
            return Err(Error::ConvergenceFailure("non-finite chordal cost".into()));
        }
        if c > current * (1.0 + 1e-12) + 1e-15 {
            // Gauss-Newton overshoot at convergence; keep the better iterate
            break;
        }
        rots = next;
        current = c;
        if step < cfg.tolerance {
            break;
        }
    }
    Ok(rots)
}

fn solve_with_focal(g: &StitchGraph, f: f64, cfg: &PoseConfig) -> Result<(Vec<Rot3>, f64)> {
    let rel: Vec<Rot3> = g.edges.iter().map(|e| edge_rotation(g, e, f)).collect::<Result<_>>()?;
    let rots = average_rotations(g, &rel, chain(g, &rel), cfg)?;
    let err = mean_transfer_error(g, &rots, f);
    Ok((rots, err))
}

/// Focal initialization from edge homographies, chaining, chordal averaging,
/// and an optional 1D refinement of the shared focal.
pub fn rotation_bundle_adjust(g: &StitchGraph, cfg: &PoseConfig) -> Result<RotationEstimate> {
    let n = g.len();
    if n == 0 {
        return Err(Error::InvalidConfig("no images".into()));
    }
    if n == 1 || g.edges.is_empty() {
        let f = g.nodes[0].width as f64;
        log::warn!("no edges; focal defaults to the image width");
        return Ok(RotationEstimate {
            rotations: vec![Rot3::identity(); n],
            focals: vec![f; n],
            mean_reprojection_error: 0.0,
            reference: g.reference,
        });
    }
    let mut estimates = Vec::new();
    for e in &g.edges {
        let (ia, ib) = (&g.nodes[e.a], &g.nodes[e.b]);
        let hc = centering(ib) * e.homography.matrix() * centering(ia).try_inverse().unwrap_or_else(Matrix3::identity);
        match focals_from_homography(&hc) {
            (Some(fa), Some(fb)) => estimates.push((fa * fb).sqrt()),
            _ => {
                let err = Error::FocalEstimationFailed { a: e.a, b: e.b };
                log::warn!("{err}; edge kept for alignment");
            }
        }
    }
    let Some(f0) = median(&mut estimates) else {
        let e = &g.edges[0];
        return Err(Error::FocalEstimationFailed { a: e.a, b: e.b });
    };
    let (mut f, (mut rots, mut err)) = (f0, solve_with_focal(g, f0, cfg)?);
    if cfg.refine_focal {
        // golden-section search on log f over a factor-2 bracket
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = ((f0 / 2.0).ln(), (f0 * 2.0).ln());
        let eval = |lf: f64| solve_with_focal(g, lf.exp(), cfg).map(|(_, e)| e).unwrap_or(f64::INFINITY);
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let (mut e1, mut e2) = (eval(x1), eval(x2));
        for _ in 0..40 {
            if e1 <= e2 {
                hi = x2;
                x2 = x1;
                e2 = e1;
                x1 = hi - phi * (hi - lo);
                e1 = eval(x1);
            } else {
                lo = x1;
                x1 = x2;
                e1 = e2;
                x2 = lo + phi * (hi - lo);
                e2 = eval(x2);
            }
            if hi - lo < 1e-6 {
                break;
            }
        }
        let fr = (0.5 * (lo + hi)).exp();
        let (rr, er) = solve_with_focal(g, fr, cfg)?;
        if er < err {
            (f, rots, err) = (fr, rr, er);
        }
    }
    if !err.is_finite() {
        return Err(Error::ConvergenceFailure("reprojection error is not finite".into()));
    }
    Ok(RotationEstimate {
        rotations: rots,
        focals: vec![f; n],
        mean_reprojection_error: err,
        reference: g.reference,
    })
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// In-plane part of `R_j R_i^T`.
pub fn relative_roll(ri: &Rot3, rj: &Rot3) -> Result<Angle2D> {
    closest_z_rotation(&(*rj * ri.transpose()))
}

pub fn assign_relative_rolls(g: &mut StitchGraph, est: &RotationEstimate) -> Result<()> {
    for e in g.edges.iter_mut() {
        e.beta = relative_roll(&est.rotations[e.a], &est.rotations[e.b])?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EdgeDump {
    a: usize,
    b: usize,
    matches: usize,
    beta_deg: f64,
}

#[derive(Serialize)]
struct PoseDump {
    nodes: Vec<usize>,
    reference: usize,
    edges: Vec<EdgeDump>,
    focals: Vec<f64>,
    rotations: Vec<[f64; 9]>,
    mean_reprojection_error: f64,
}

pub fn pose_graph_json(g: &StitchGraph, est: &RotationEstimate) -> serde_json::Value {
    serde_json::to_value(PoseDump {
        nodes: g.nodes.iter().map(|n| n.id).collect(),
        reference: g.reference,
        edges: g
            .edges
            .iter()
            .map(|e| EdgeDump {
                a: e.a,
                b: e.b,
                matches: e.matches.len(),
                beta_deg: e.beta.degrees(),
            })
            .collect(),
        focals: est.focals.clone(),
        rotations: est.rotations.iter().map(Rot3::to_row_major).collect(),
        mean_reprojection_error: est.mean_reprojection_error,
    })
    .unwrap_or(serde_json::Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    const W: u32 = 640;
    const H: u32 = 480;

    fn infos(n: usize) -> Vec<ImageInfo> {
        (0..n).map(|i| ImageInfo::new(i, W, H).unwrap()).collect()
    }

    /// Matches between rotation-only cameras viewing random far points.
    fn synth_matches(rots: &[Rot3], f: f64, noise: f64, seed: u64) -> MatchSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let info = ImageInfo::new(0, W, H).unwrap();
        let inside = |p: &Vector2<f64>| p.x >= 0.0 && p.y >= 0.0 && p.x < W as f64 && p.y < H as f64;
        let mut set = MatchSet::default();
        for i in 0..rots.len() {
            for j in i + 1..rots.len() {
                let mut ms = Vec::new();
                for _ in 0..4000 {
                    let x = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    let (Some(a), Some(b)) = (project(&info, f, &rots[i].apply(&x)), project(&info, f, &rots[j].apply(&x))) else { continue };
                    if inside(&a) && inside(&b) {
                        let jit = |p: Vector2<f64>, rng: &mut ChaCha8Rng| if noise > 0.0 { p + Vector2::new(nd.sample(rng), nd.sample(rng)) } else { p };
                        let (a, b) = (jit(a, &mut rng), jit(b, &mut rng));
                        ms.push(PointMatch { pi: a, pj: b });
                    }
                    if ms.len() == 120 {
                        break;
                    }
                }
                if ms.len() >= 20 {
                    set.insert(i, j, ms);
                }
            }
        }
        set
    }

    fn pans(deg: &[f64]) -> Vec<Rot3> {
        deg.iter().map(|d| Rot3::ry(d.to_radians())).collect()
    }

    #[test]
    fn chain_of_five() {
        let rots = pans(&[0.0, 20.0, 40.0, 60.0, 80.0]);
        let ms = synth_matches(&rots, 800.0, 0.0, 1);
        let g = build_stitch_graph(&infos(5), &ms, &EdgeSelection::Auto, 0, &PoseConfig::default()).unwrap();
        let mut e: Vec<_> = g.edges.iter().map(|e| (e.a, e.b)).collect();
        e.sort();
        assert_eq!(e, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
    }

    #[test]
    fn disjoint_pairs() {
        let mut ms = synth_matches(&pans(&[0.0, 15.0]), 800.0, 0.0, 2);
        let other = synth_matches(&pans(&[0.0, 15.0]), 800.0, 0.0, 3);
        ms.insert(2, 3, other.edges[&(0, 1)].clone());
        let err = build_stitch_graph(&infos(4), &ms, &EdgeSelection::Auto, 0, &PoseConfig::default()).unwrap_err();
        let Error::DisconnectedGraph { components } = err else { panic!("{err}") };
        assert_eq!(components, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn manual_edge_below_floor() {
        let mut ms = synth_matches(&pans(&[0.0, 15.0]), 800.0, 0.0, 4);
        let few: Vec<_> = ms.edges[&(0, 1)].iter().take(3).copied().collect();
        ms.insert(0, 1, few);
        let err = build_stitch_graph(&infos(2), &ms, &EdgeSelection::Manual(vec![(0, 1)]), 0, &PoseConfig::default());
        assert!(matches!(err, Err(Error::Format { .. })));
    }

    #[test]
    fn focal_formulas_on_exact_homography() {
        let (fa, fb) = (700.0, 900.0);
        let r = Rot3::ry(0.3) * Rot3::rx(0.1);
        let ka = Matrix3::new(fa, 0.0, 0.0, 0.0, fa, 0.0, 0.0, 0.0, 1.0);
        let kb = Matrix3::new(fb, 0.0, 0.0, 0.0, fb, 0.0, 0.0, 0.0, 1.0);
        let h = kb * r.matrix() * ka.try_inverse().unwrap() * 3.0;
        let (s, d) = focals_from_homography(&h);
        assert!((s.unwrap() - fa).abs() < 1e-6 && (d.unwrap() - fb).abs() < 1e-6);
    }

    fn estimate(rots: &[Rot3], noise: f64, reference: usize, seed: u64) -> (StitchGraph, RotationEstimate) {
        let ms = synth_matches(rots, 800.0, noise, seed);
        let mut g = build_stitch_graph(&infos(rots.len()), &ms, &EdgeSelection::Auto, reference, &PoseConfig::default()).unwrap();
        let est = rotation_bundle_adjust(&g, &PoseConfig::default()).unwrap();
        assign_relative_rolls(&mut g, &est).unwrap();
        (g, est)
    }

    #[test]
    fn three_view_pans() {
        let truth = pans(&[0.0, 15.0, 30.0]);
        let (_, est) = estimate(&truth, 0.0, 0, 5);
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            let got = est.rotations[j] * est.rotations[i].transpose();
            let want = truth[j] * truth[i].transpose();
            assert!(got.angle_to(&want).to_degrees() < 0.2);
        }
        assert!((est.focals[0] - 800.0).abs() < 8.0, "{}", est.focals[0]);
    }

    #[test]
    fn noise_free_matches_truth() {
        let truth: Vec<Rot3> = (0..5)
            .map(|k| Rot3::rz((k as f64 * 2.0 - 4.0).to_radians()) * Rot3::ry((k as f64 * 14.0).to_radians()))
            .collect();
        let (_, est) = estimate(&truth, 0.0, 0, 6);
        let gauge = truth[0].transpose();
        for (got, want) in est.rotations.iter().zip(&truth) {
            assert!(got.angle_to(&(*want * gauge)).to_degrees() < 0.05);
        }
    }

    #[test]
    fn noisy_reprojection_error() {
        let (_, est) = estimate(&pans(&[0.0, 15.0, 30.0, 45.0]), 1.0, 0, 7);
        assert!(est.mean_reprojection_error < 2.0, "{}", est.mean_reprojection_error);
    }

    #[test]
    fn single_image_is_identity() {
        let g = build_stitch_graph(&infos(1), &MatchSet::default(), &EdgeSelection::Auto, 0, &PoseConfig::default()).unwrap();
        let est = rotation_bundle_adjust(&g, &PoseConfig::default()).unwrap();
        assert_eq!(est.rotations, vec![Rot3::identity()]);
    }

    #[test]
    fn reference_gauge() {
        let truth = pans(&[0.0, 14.0, 28.0, 42.0]);
        let ms = synth_matches(&truth, 800.0, 0.7, 8);
        let solve = |r| {
            let g = build_stitch_graph(&infos(4), &ms, &EdgeSelection::Auto, r, &PoseConfig::default()).unwrap();
            rotation_bundle_adjust(&g, &PoseConfig::default()).unwrap()
        };
        let (a, b) = (solve(0), solve(2));
        assert_eq!(b.rotations[2], Rot3::identity());
        for i in 0..4 {
            for j in 0..4 {
                let pa = a.rotations[j] * a.rotations[i].transpose();
                let pb = b.rotations[j] * b.rotations[i].transpose();
                assert!((pa.matrix() - pb.matrix()).amax() < 1e-8, "{i}{j}");
            }
        }
    }

    #[test]
    fn beta_antisymmetry_and_examples() {
        let (g, _) = estimate(&pans(&[0.0, 15.0, 30.0]), 0.5, 1, 9);
        for e in &g.edges {
            assert!((g.beta(e.a, e.b).unwrap().radians() + g.beta(e.b, e.a).unwrap().radians()).abs() < 1e-12);
        }
        let ri = Rot3::rx(10f64.to_radians());
        assert_eq!(relative_roll(&ri, &ri).unwrap().radians(), 0.0);
        let rj = Rot3::rz(7f64.to_radians()) * ri;
        assert!((relative_roll(&ri, &rj).unwrap().degrees() - 7.0).abs() < 1e-9);
        let rj = Rot3::rz(5f64.to_radians()) * ri;
        assert!((relative_roll(&ri, &rj).unwrap().degrees() - 5.0).abs() < 1e-6);
    }
}
