//! Vanishing points in a common frame, the dominant Manhattan directions they
//! share, and each camera's roll relative to the world vertical.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::PriorConfig;
use crate::error::{Error, Result};
use crate::geom::{skew, Angle2D, Rot3, UnitVec3};
use crate::vp::VpTriplet;

/// Per-image VP triplets rotated into the reference frame; `None` where the
/// image has no triplet.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedVps {
    pub vps: Vec<Option<[UnitVec3; 3]>>,
}

/// `v_hat = W R_i^T v` with `W = R_r`.
pub fn align_vps(triplets: &[Option<VpTriplet>], rotations: &[Rot3], reference: usize) -> AlignedVps {
    let w = rotations[reference];
    let vps = triplets
        .iter()
        .zip(rotations)
        .map(|(t, r)| {
            let t = t.as_ref()?;
            let to_ref = w * r.transpose();
            let map = |v: &UnitVec3| UnitVec3::new(to_ref.apply(v.as_vector())).expect("rotation preserves length");
            Some([map(&t.v[0]), map(&t.v[1]), map(&t.v[2])])
        })
        .collect();
    AlignedVps { vps }
}

const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Column `k` of the dominant frame pairs with `sign[k] * v[perm[k]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnMatch {
    pub perm: [usize; 3],
    pub sign: [f64; 3],
}

impl ColumnMatch {
    /// Columns of `v` rearranged to follow the dominant frame.
    pub fn arrange(&self, v: &[UnitVec3; 3]) -> Matrix3<f64> {
        Matrix3::from_columns(&[
            v[self.perm[0]].as_vector() * self.sign[0],
            v[self.perm[1]].as_vector() * self.sign[1],
            v[self.perm[2]].as_vector() * self.sign[2],
        ])
    }
}

/// Signed column assignment minimizing `|D - V P|_F^2`, and that residual.
/// The first permutation in canonical order wins ties.
pub fn match_columns(d: &Matrix3<f64>, v: &[UnitVec3; 3]) -> (ColumnMatch, f64) {
    let mut best = (ColumnMatch { perm: PERMS[0], sign: [1.0; 3] }, f64::NEG_INFINITY);
    for perm in PERMS {
        let dots = [0, 1, 2].map(|k| d.column(k).dot(v[perm[k]].as_vector()));
        let score: f64 = dots.iter().map(|x| x.abs()).sum();
        if score > best.1 {
            let sign = dots.map(|x| if x < 0.0 { -1.0 } else { 1.0 });
            best = (ColumnMatch { perm, sign }, score);
        }
    }
    // |d - s v|^2 = 2 - 2|d.v| for unit columns
    (best.0, (6.0 - 2.0 * best.1).max(0.0))
}

#[derive(Clone, Debug)]
pub struct DominantDirections {
    /// Columns are the dominant directions in the reference frame.
    pub d: Rot3,
    /// Column-matched squared Frobenius residual per image.
    pub residuals: Vec<Option<f64>>,
    pub matches: Vec<Option<ColumnMatch>>,
    pub total: f64,
    pub hypotheses: usize,
}

fn total_cost(d: &Matrix3<f64>, aligned: &AlignedVps) -> f64 {
    aligned.vps.iter().flatten().map(|v| match_columns(d, v).1).sum()
}

/// Right-handed frame with `d1 = a` and `d3` normal to `a` and `b`.
fn hypothesis(a: &UnitVec3, b: &UnitVec3) -> Option<Rot3> {
    let d1 = *a.as_vector();
    let d3 = d1.cross(b.as_vector());
    if d3.norm() < 1e-9 {
        return None;
    }
    let d3 = d3.normalize();
    let d2 = d3.cross(&d1);
    Rot3::from_matrix(Matrix3::from_columns(&[d1, d2, d3])).ok()
}

fn support(d: &Rot3, all: &[UnitVec3], cos_tol: f64) -> usize {
    all.iter()
        .filter(|v| (0..3).any(|k| d.matrix().column(k).dot(v.as_vector()).abs() >= cos_tol))
        .count()
}

/// Candidate frames from roughly orthogonal pairs of aligned VPs (any two
/// images), strongest support first, near-duplicates removed.
fn hypotheses(aligned: &AlignedVps, cfg: &PriorConfig) -> Vec<Rot3> {
    let all: Vec<UnitVec3> = aligned.vps.iter().flatten().flat_map(|t| t.iter().copied()).collect();
    let max_dot = cfg.orthogonality_deg.to_radians().sin();
    let cos_tol = cfg.hypothesis_support_deg.to_radians().cos();
    let pairs: Vec<(usize, usize)> = (0..all.len())
        .flat_map(|a| (a + 1..all.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| all[a].dot(&all[b]).abs() < max_dot)
        .collect();
    let mut scored: Vec<(usize, usize, Rot3)> = pairs
        .par_iter()
        .enumerate()
        .filter_map(|(k, &(a, b))| {
            let h = hypothesis(&all[a], &all[b])?;
            Some((support(&h, &all, cos_tol), k, h))
        })
        .collect();
    scored.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
    let dup_cos = 1f64.to_radians().cos();
    let mut kept: Vec<Rot3> = Vec::new();
    for (_, _, h) in scored {
        let same = |k: &Rot3| {
            (0..3).all(|c| {
                (0..3).any(|e| k.matrix().column(e).dot(&h.matrix().column(c)).abs() >= dup_cos)
            })
        };
        if !kept.iter().any(same) {
            kept.push(h);
            if kept.len() == cfg.max_hypotheses {
                break;
            }
        }
    }
    kept
}

/// Gauss-Newton on `sum_i |D exp([w]) - V_i P_i|^2`, re-matching columns
/// every iteration. Accepted steps never increase the cost.
fn refine(d0: Rot3, aligned: &AlignedVps, cfg: &PriorConfig) -> (Rot3, f64) {
    let gens = [skew(&Vector3::x()), skew(&Vector3::y()), skew(&Vector3::z())];
    let mut d = d0;
    let mut cost = total_cost(d.matrix(), aligned);
    for _ in 0..cfg.gn_max_iterations {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        let jac: Vec<Matrix3<f64>> = gens.iter().map(|g| d.matrix() * g).collect();
        for v in aligned.vps.iter().flatten() {
            let (m, _) = match_columns(d.matrix(), v);
            let r = d.matrix() - m.arrange(v);
            for a in 0..3 {
                jtr[a] += jac[a].dot(&r);
                for b in 0..3 {
                    jtj[(a, b)] += jac[a].dot(&jac[b]);
                }
            }
        }
        let Some(w) = jtj.try_inverse().map(|inv| -(inv * jtr)) else { break };
        let mut step = w;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = d * Rot3::from_axis_angle(&step);
            let c = total_cost(cand.matrix(), aligned);
            if c <= cost {
                accepted = Some((cand, c));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, c)) = accepted else { break };
        d = cand;
        cost = c;
        if step.norm() < cfg.gn_tolerance {
            break;
        }
    }
    (d, cost)
}

/// Best refined hypothesis over all candidate frames.
pub fn estimate_dominant_directions(aligned: &AlignedVps, cfg: &PriorConfig) -> Result<DominantDirections> {
    let hyps = hypotheses(aligned, cfg);
    if hyps.is_empty() {
        return Err(Error::NoHypothesis);
    }
    let refined: Vec<(Rot3, f64)> = hyps.par_iter().map(|h| refine(*h, aligned, cfg)).collect();
    let (d, total) = refined
        .iter()
        .copied()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .expect("nonempty");
    let mut residuals = Vec::with_capacity(aligned.vps.len());
    let mut matches = Vec::with_capacity(aligned.vps.len());
    for v in &aligned.vps {
        match v {
            Some(v) => {
                let (m, e) = match_columns(d.matrix(), v);
                residuals.push(Some(e));
                matches.push(Some(m));
            }
            None => {
                residuals.push(None);
                matches.push(None);
            }
        }
    }
    Ok(DominantDirections {
        d,
        residuals,
        matches,
        total,
        hypotheses: hyps.len(),
    })
}

/// Proper signed permutation `A` sending each dominant direction to its
/// nearest world axis, with world axes labeled like the reference camera.
/// Returns `A` and whether another labeling tied within 1e-9.
pub fn world_axes(d: &Rot3) -> (Matrix3<f64>, bool) {
    let mut best: Option<(Matrix3<f64>, f64)> = None;
    let mut tied = false;
    for perm in PERMS {
        for signs in 0..8u8 {
            let mut a = Matrix3::zeros();
            for k in 0..3 {
                a[(perm[k], k)] = if signs >> k & 1 == 1 { -1.0 } else { 1.0 };
            }
            if a.determinant() < 0.0 {
                continue;
            }
            // sum_k a_k . d_k
            let score = (a.transpose() * d.matrix()).trace();
            match best {
                Some((_, s)) if score > s + 1e-9 => {
                    best = Some((a, score));
                    tied = false;
                }
                Some((_, s)) if (score - s).abs() <= 1e-9 => tied = true,
                None => best = Some((a, score)),
                _ => {}
            }
        }
    }
    (best.expect("24 proper labelings exist").0, tied)
}

/// Camera-to-world rotation and initial roll of each image with a triplet.
///
/// The camera-frame VPs, rearranged by the column match found on the
/// aligned VPs, give `R_i^w = A [v]^T`. The roll is the screen angle of the
/// world "down" axis seen by camera `i`, which equals the in-plane part of
/// `(R_i^w)^T` for level and rolled cameras and stays defined at any pan.
pub fn initial_rolls(
    dominant: &DominantDirections,
    triplets: &[Option<VpTriplet>],
) -> Result<(Vec<Option<Angle2D>>, bool)> {
    let (a, tied) = world_axes(&dominant.d);
    let mut out = Vec::with_capacity(triplets.len());
    for (t, m) in triplets.iter().zip(&dominant.matches) {
        let (Some(t), Some(m)) = (t, m) else {
            out.push(None);
            continue;
        };
        let c = m.arrange(&t.v);
        let r_w = Rot3::nearest(&(a * c.transpose()))?;
        let down = r_w.transpose().apply(&Vector3::y());
        out.push(Angle2D::from_vector(down.y, -down.x));
    }
    Ok((out, tied))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::procrustes_fit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn triplet_of(m: &Matrix3<f64>) -> [UnitVec3; 3] {
        [0, 1, 2].map(|k| UnitVec3::new(m.column(k).into_owned()).unwrap())
    }

    fn vp(m: &Matrix3<f64>) -> Option<VpTriplet> {
        Some(VpTriplet {
            v: triplet_of(m),
            support: [10; 3],
            focal: 500.0,
            residual: 0.0,
        })
    }

    fn random_rot(rng: &mut ChaCha8Rng, max_angle: f64) -> Rot3 {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        Rot3::from_axis_angle(&(axis.normalize() * rng.random_range(0.0..max_angle)))
    }

    #[test]
    fn identity_projection() {
        let m = Rot3::rx(0.2) * Rot3::rz(0.4);
        let a = align_vps(&[vp(m.matrix())], &[Rot3::ry(0.3)], 0);
        for k in 0..3 {
            assert!((a.vps[0].unwrap()[k].as_vector() - m.matrix().column(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn rolled_cameras_align() {
        let scene = Rot3::ry(0.5) * Rot3::rx(0.1);
        let cams = [Rot3::identity(), Rot3::rz(20f64.to_radians())];
        let trips: Vec<_> = cams.iter().map(|c| vp((*c * scene).matrix())).collect();
        let a = align_vps(&trips, &cams, 0);
        for k in 0..3 {
            let (u, v) = (a.vps[0].unwrap()[k], a.vps[1].unwrap()[k]);
            assert!((u.as_vector() - v.as_vector()).norm() < 1e-12);
        }
        let none = align_vps(&[None, trips[1]], &cams, 0);
        assert!(none.vps[0].is_none());
    }

    #[test]
    fn exact_frames_are_recovered() {
        let truth = Rot3::ry(0.7) * Rot3::rx(-0.3);
        let aligned = AlignedVps { vps: vec![Some(triplet_of(truth.matrix())); 4] };
        let dom = estimate_dominant_directions(&aligned, &PriorConfig::default()).unwrap();
        assert!(dom.total < 1e-12);
        let (m, e) = match_columns(truth.matrix(), &triplet_of(dom.d.matrix()));
        assert!(e < 1e-12, "{m:?}");
    }

    #[test]
    fn noisy_frames_reach_procrustes_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = Rot3::rz(0.3) * Rot3::ry(1.1);
        let vps: Vec<_> = (0..10)
            .map(|_| {
                let noisy = random_rot(&mut rng, 2f64.to_radians()) * truth;
                // shuffle and flip columns to exercise matching
                let m = noisy.matrix();
                let shuffled = Matrix3::from_columns(&[m.column(2).into_owned(), -m.column(0), m.column(1).into_owned()]);
                Some(triplet_of(&shuffled))
            })
            .collect();
        let aligned = AlignedVps { vps };
        let dom = estimate_dominant_directions(&aligned, &PriorConfig::default()).unwrap();
        let targets: Vec<Matrix3<f64>> = aligned
            .vps
            .iter()
            .zip(&dom.matches)
            .map(|(v, m)| m.unwrap().arrange(&v.unwrap()))
            .collect();
        let best = procrustes_fit(&targets).unwrap();
        let oracle: f64 = targets.iter().map(|t| (best.matrix() - t).norm_squared()).sum();
        assert!(dom.total <= oracle + 1e-8, "{} vs {oracle}", dom.total);
        assert!((dom.total - oracle).abs() < 1e-6);
    }

    #[test]
    fn rotated_image_stands_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = Rot3::rx(0.2);
        let mut vps: Vec<_> = (0..8)
            .map(|_| Some(triplet_of((random_rot(&mut rng, 1f64.to_radians()) * truth).matrix())))
            .collect();
        let off = Rot3::from_axis_angle(&(Vector3::new(1.0, 1.0, 0.3).normalize() * 40f64.to_radians())) * truth;
        vps[5] = Some(triplet_of(off.matrix()));
        let dom = estimate_dominant_directions(&AlignedVps { vps }, &PriorConfig::default()).unwrap();
        let mut e: Vec<f64> = dom.residuals.iter().map(|x| x.unwrap()).collect();
        let outlier = e[5];
        e.sort_by(f64::total_cmp);
        assert!(outlier >= 10.0 * e[e.len() / 2], "{outlier} vs {e:?}");
    }

    #[test]
    fn no_orthogonal_pair_means_no_hypothesis() {
        let a = UnitVec3::from_xyz(1.0, 0.0, 0.0).unwrap();
        let b = UnitVec3::from_xyz(1.0, 0.05, 0.0).unwrap();
        let aligned = AlignedVps { vps: vec![Some([a, b, a])] };
        assert!(matches!(
            estimate_dominant_directions(&aligned, &PriorConfig::default()),
            Err(Error::NoHypothesis)
        ));
    }

    #[test]
    fn cost_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vps: Vec<_> = (0..6).map(|_| Some(triplet_of(random_rot(&mut rng, 0.4).matrix()))).collect();
        let aligned = AlignedVps { vps };
        let start = random_rot(&mut rng, 0.5);
        let c0 = total_cost(start.matrix(), &aligned);
        let (_, c) = refine(start, &aligned, &PriorConfig::default());
        assert!(c <= c0);
    }

    #[test]
    fn permuted_frame_labels_exactly() {
        let d = Rot3::from_matrix(Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0)).unwrap();
        let d = Rot3::from_axis_angle(&Vector3::new(0.03, -0.04, 0.02)) * d;
        let (a, tied) = world_axes(&d);
        assert!(!tied);
        assert_eq!(a, Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0));
        assert!((a.transpose() * d.matrix() - Matrix3::identity()).amax() < 0.1);
    }

    #[test]
    fn identity_gives_zero_roll() {
        let trips = vec![vp(&Matrix3::identity()); 2];
        let aligned = align_vps(&trips, &[Rot3::identity(); 2], 0);
        let dom = estimate_dominant_directions(&aligned, &PriorConfig::default()).unwrap();
        let (alpha, _) = initial_rolls(&dom, &trips).unwrap();
        for a in alpha {
            assert!(a.unwrap().radians().abs() < 1e-12);
        }
    }

    #[test]
    fn rolls_are_negated_camera_rolls() {
        // world z down; camera i sees world through Rz(-roll) * level(pan)^T
        let level = |p: f64| {
            let (s, c) = p.sin_cos();
            Matrix3::from_columns(&[Vector3::new(-s, c, 0.0), Vector3::new(0.0, 0.0, 1.0), Vector3::new(c, s, 0.0)])
        };
        let rolls = [-5.0f64, 0.0, 5.0];
        let pans = [0.0f64, 15.0, 30.0];
        let cams: Vec<Rot3> = rolls
            .iter()
            .zip(&pans)
            .map(|(r, p)| Rot3::rz(-r.to_radians()) * Rot3::from_matrix(level(p.to_radians()).transpose()).unwrap())
            .collect();
        let rel: Vec<Rot3> = cams.iter().map(|c| *c * cams[1].transpose()).collect();
        let trips: Vec<_> = cams.iter().map(|c| vp(c.matrix())).collect();
        let aligned = align_vps(&trips, &rel, 1);
        let dom = estimate_dominant_directions(&aligned, &PriorConfig::default()).unwrap();
        let (alpha, _) = initial_rolls(&dom, &trips).unwrap();
        for (a, r) in alpha.iter().zip(rolls) {
            assert!((a.unwrap().degrees() + r).abs() < 0.5, "{} vs {r}", a.unwrap().degrees());
        }
    }
}
