//! Linear solves for the per-image rotation and scale priors.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::geom::hull::reduce_quarter_turn;
use crate::geom::{convex_hull, hull_perimeter, solve_lsq, Angle2D, SparseLsqProblem};
use crate::pose::StitchGraph;

/// Rows `sqrt(lambda) (R(beta_ij) x_i - x_j)` for every edge, unknowns
/// `x_i = (u_i, v_i)` at `2i, 2i + 1`.
fn add_smoothness(p: &mut SparseLsqProblem, g: &StitchGraph, lambda: f64) -> Result<()> {
    let w = lambda.sqrt();
    for e in &g.edges {
        let r = e.beta.rotation();
        let (i, j) = (2 * e.a, 2 * e.b);
        for row in 0..2 {
            p.add_row(w, &[(i, r[(row, 0)]), (i + 1, r[(row, 1)]), (j + row, -1.0)], 0.0)?;
        }
    }
    Ok(())
}

fn angles(x: &[f64]) -> Vec<Angle2D> {
    x.chunks(2)
        .map(|c| {
            Angle2D::from_vector(c[0], c[1]).unwrap_or_else(|| {
                log::warn!("rotation unknown collapsed to zero; using 0");
                Angle2D::default()
            })
        })
        .collect()
}

/// Minimizes `sum_inliers psi_i |x_i - alpha_i|^2 + lambda sum_edges |R(beta_ij) x_i - x_j|^2`
/// over unconstrained 2D vectors, then reads each angle off its vector.
pub fn solve_rotations(
    g: &StitchGraph,
    alpha: &[Option<Angle2D>],
    psi: &[Option<f64>],
    lambda: f64,
) -> Result<Vec<Angle2D>> {
    let n = g.len();
    let mut p = SparseLsqProblem::new(2 * n);
    for i in 0..n {
        if let (Some(a), Some(w)) = (alpha[i], psi[i]) {
            let t = a.unit_vector();
            p.add_row(w.sqrt(), &[(2 * i, 1.0)], t.x)?;
            p.add_row(w.sqrt(), &[(2 * i + 1, 1.0)], t.y)?;
        }
    }
    add_smoothness(&mut p, g, lambda)?;
    Ok(angles(&solve_lsq(&p)?.x))
}

/// Canvas position of each image center under the similarity prior, from
/// the mean displacement of matched points; the reference sits at the origin.
pub fn prior_centers(g: &StitchGraph, theta: &[Angle2D], scales: &[f64]) -> Result<Vec<Vector2<f64>>> {
    let n = g.len();
    let mut p = SparseLsqProblem::new(2 * n);
    let sim = |i: usize| -> Matrix2<f64> { theta[i].image_rotation() * scales[i] };
    for e in &g.edges {
        if e.matches.is_empty() {
            continue;
        }
        let (ca, cb) = (g.nodes[e.a].center(), g.nodes[e.b].center());
        let d: Vector2<f64> = e
            .matches
            .iter()
            .map(|m| sim(e.a) * (m.pi - ca) - sim(e.b) * (m.pj - cb))
            .sum::<Vector2<f64>>()
            / e.matches.len() as f64;
        for k in 0..2 {
            p.add_row(1.0, &[(2 * e.b + k, 1.0), (2 * e.a + k, -1.0)], d[k])?;
        }
    }
    p.add_constraint(&[(2 * g.reference, 1.0)], 0.0)?;
    p.add_constraint(&[(2 * g.reference + 1, 1.0)], 0.0)?;
    let x = solve_lsq(&p)?.x;
    Ok(x.chunks(2).map(|c| Vector2::new(c[0], c[1])).collect())
}

/// Screen angle of the first principal direction of `points`, reduced to
/// (-45, 45] degrees; zero when the spread is isotropic.
pub fn principal_angle(points: &[Vector2<f64>]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mean: Vector2<f64> = points.iter().sum::<Vector2<f64>>() / points.len() as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for q in points {
        let d = q - mean;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    let spread = sxx + syy;
    if spread <= 0.0 || ((sxx - syy).hypot(2.0 * sxy)) < 1e-9 * spread {
        return 0.0;
    }
    // pixel y points down, so negate it for a screen angle
    reduce_quarter_turn(0.5 * (-2.0 * sxy).atan2(sxx - syy))
}

/// Smoothness-only rolls anchored at the reference, then turned so the
/// image centers line up with the canvas axes.
pub fn fallback_rotations(g: &StitchGraph, scales: &[f64]) -> Result<Vec<Angle2D>> {
    let n = g.len();
    let mut p = SparseLsqProblem::new(2 * n);
    add_smoothness(&mut p, g, 1.0)?;
    p.add_constraint(&[(2 * g.reference, 1.0)], 1.0)?;
    p.add_constraint(&[(2 * g.reference + 1, 1.0)], 0.0)?;
    let theta = angles(&solve_lsq(&p)?.x);
    let tilt = match prior_centers(g, &theta, scales) {
        Ok(c) => principal_angle(&c),
        Err(e) => {
            log::warn!("image centers undetermined ({e}); skipping straightening");
            0.0
        }
    };
    Ok(theta.into_iter().map(|t| t - Angle2D::new(tilt)).collect())
}

/// Perimeter ratio `c(h_j) / c(h_i)` of the matched point hulls, so that
/// `s_i = eta s_j` brings both images to a common scale.
pub fn scale_ratio(g: &StitchGraph, i: usize, j: usize) -> Option<f64> {
    let ms = g.matches(i, j)?;
    let pi: Vec<Vector2<f64>> = ms.iter().map(|m| m.pi).collect();
    let pj: Vec<Vector2<f64>> = ms.iter().map(|m| m.pj).collect();
    if convex_hull(&pi).len() < 3 || convex_hull(&pj).len() < 3 {
        return None;
    }
    let (ci, cj) = (hull_perimeter(&pi).ok()?, hull_perimeter(&pj).ok()?);
    (ci > 0.0 && cj > 0.0).then(|| cj / ci)
}

/// Per-image scales minimizing `sum_edges (eta_ij s_j - s_i)^2` with the
/// scales of each constrained component summing to its size (so `sum s = N`).
/// Scales below 0.1 are floored and reported.
pub fn estimate_scales(g: &StitchGraph) -> Result<(Vec<f64>, Vec<String>)> {
    let n = g.len();
    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    for e in &g.edges {
        match scale_ratio(g, e.a, e.b) {
            Some(eta) => rows.push((e.a, e.b, eta)),
            None => warnings.push(format!("edge ({}, {}): degenerate match hull; no scale constraint", e.a, e.b)),
        }
    }
    if rows.is_empty() {
        return Ok((vec![1.0; n], warnings));
    }
    let comps = {
        let mut label: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for &(a, b, _) in &rows {
                let m = label[a].min(label[b]);
                if label[a] != m || label[b] != m {
                    label[a] = m;
                    label[b] = m;
                    changed = true;
                }
            }
            if !changed {
                break label;
            }
        }
    };
    let mut p = SparseLsqProblem::new(n);
    for &(a, b, eta) in &rows {
        p.add_row(1.0, &[(b, eta), (a, -1.0)], 0.0)?;
    }
    let mut roots: Vec<usize> = comps.clone();
    roots.sort_unstable();
    roots.dedup();
    for r in roots {
        let members: Vec<(usize, f64)> = (0..n).filter(|&i| comps[i] == r).map(|i| (i, 1.0)).collect();
        let size = members.len() as f64;
        p.add_constraint(&members, size)?;
    }
    let mut s = solve_lsq(&p)?.x;
    for (i, v) in s.iter_mut().enumerate() {
        if !(*v >= 0.1) {
            warnings.push(format!("image {i}: scale {v:.4} floored at 0.1"));
            *v = 0.1;
        }
    }
    Ok((s, warnings))
}

/// Mean squared distance between inlier VPs and their dominant directions,
/// divided by the inlier ratio.
pub fn vp_divergence(residuals: &[Option<f64>], inliers: &[bool], rho: f64) -> Result<f64> {
    let e: Vec<f64> = residuals
        .iter()
        .zip(inliers)
        .filter(|(_, &inl)| inl)
        .map(|(e, _)| e.ok_or_else(|| Error::InvalidProblem("inlier without a residual".into())))
        .collect::<Result<_>>()?;
    if e.is_empty() || !(rho > 0.0) {
        return Err(Error::AllOutliers);
    }
    Ok(e.iter().sum::<f64>() / (3.0 * e.len() as f64) / rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Homography;
    use crate::ingest::{ImageInfo, PointMatch};
    use crate::pose::StitchEdge;
    use nalgebra::{DMatrix, DVector};

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> StitchGraph {
        StitchGraph {
            nodes: (0..n).map(|i| ImageInfo::new(i, 100, 100).unwrap()).collect(),
            edges: edges
                .iter()
                .map(|&(a, b, beta)| StitchEdge {
                    a,
                    b,
                    matches: vec![],
                    homography: Homography::identity(),
                    candidate_matches: 0,
                    beta: Angle2D::from_degrees(beta),
                })
                .collect(),
            reference: 0,
        }
    }

    fn deg(v: &[f64]) -> Vec<Option<Angle2D>> {
        v.iter().map(|d| Some(Angle2D::from_degrees(*d))).collect()
    }

    #[test]
    fn single_image_data_only() {
        let t = solve_rotations(&graph(1, &[]), &deg(&[33.0]), &[Some(1.0)], 10.0).unwrap();
        assert!((t[0].degrees() - 33.0).abs() < 1e-12);
    }

    #[test]
    fn two_images_match_dense_oracle() {
        let g = graph(2, &[(0, 1, 0.0)]);
        let t = solve_rotations(&g, &deg(&[0.0, 10.0]), &[Some(1.0); 2], 10.0).unwrap();
        // dense normal equations of the 4-unknown problem
        let a = DMatrix::from_row_slice(
            8,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                10f64.sqrt(), 0.0, -10f64.sqrt(), 0.0, //
                0.0, 10f64.sqrt(), 0.0, -10f64.sqrt(), //
                0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0,
            ],
        );
        let (s, c) = 10f64.to_radians().sin_cos();
        let b = DVector::from_row_slice(&[1.0, 0.0, c, s, 0.0, 0.0, 0.0, 0.0]);
        let x = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
        let want = [x[1].atan2(x[0]).to_degrees(), x[3].atan2(x[2]).to_degrees()];
        for k in 0..2 {
            assert!((t[k].degrees() - want[k]).abs() < 1e-9);
        }
        assert!((want[0] - 4.762).abs() < 1e-3 && (want[1] - 5.238).abs() < 1e-3);
    }

    #[test]
    fn consistent_chain_is_exact() {
        let g = graph(4, &[(0, 1, 3.0), (1, 2, -7.0), (2, 3, 12.0)]);
        let alpha = deg(&[2.0, 5.0, -2.0, 10.0]);
        let t = solve_rotations(&g, &alpha, &[Some(0.9), Some(0.3), Some(0.7), Some(0.5)], 10.0).unwrap();
        for (a, b) in t.iter().zip(&alpha) {
            assert!((a.radians() - b.unwrap().radians()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_lambda_returns_alpha() {
        let g = graph(3, &[(0, 1, 30.0), (1, 2, -40.0)]);
        let alpha = deg(&[1.0, -20.0, 77.0]);
        let t = solve_rotations(&g, &alpha, &[Some(1.0); 3], 0.0).unwrap();
        for (a, b) in t.iter().zip(&alpha) {
            assert!((a.radians() - b.unwrap().radians()).abs() < 1e-12);
        }
    }

    fn chain_with_matches(n: usize, beta: f64) -> StitchGraph {
        // image centers march right along x
        let mut g = graph(n, &(0..n - 1).map(|i| (i, i + 1, beta)).collect::<Vec<_>>());
        for e in &mut g.edges {
            e.matches = (0..10)
                .map(|k| PointMatch {
                    pi: Vector2::new(70.0 + k as f64, 20.0 + 6.0 * k as f64),
                    pj: Vector2::new(20.0 + k as f64, 20.0 + 6.0 * k as f64),
                })
                .collect();
        }
        g
    }

    #[test]
    fn fallback_zero_beta() {
        let g = chain_with_matches(4, 0.0);
        let t = fallback_rotations(&g, &[1.0; 4]).unwrap();
        assert!(t.iter().all(|a| a.radians().abs() < 1e-12));
    }

    #[test]
    fn fallback_chain_before_straightening() {
        let g = graph(4, &[(0, 1, 5.0), (1, 2, 5.0), (2, 3, 5.0)]);
        // no matches: centers are undetermined and straightening is skipped
        let t = fallback_rotations(&g, &[1.0; 4]).unwrap();
        for (k, a) in t.iter().enumerate() {
            assert!((a.degrees() - 5.0 * k as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn fallback_ring_spreads_inconsistency() {
        let g = graph(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]);
        let t = fallback_rotations(&g, &[1.0; 4]).unwrap();
        // dense oracle: x_0 = (1, 0) substituted, 6 free unknowns, 8 rows
        let r = Angle2D::from_degrees(1.0).rotation();
        let mut a = DMatrix::<f64>::zeros(8, 6);
        let mut b = DVector::<f64>::zeros(8);
        let col = |i: usize| if i == 0 { None } else { Some(2 * (i - 1)) };
        for (k, e) in g.edges.iter().enumerate() {
            for row in 0..2 {
                let y = 2 * k + row;
                match col(e.a) {
                    Some(c) => {
                        a[(y, c)] += r[(row, 0)];
                        a[(y, c + 1)] += r[(row, 1)];
                    }
                    None => b[y] -= r[(row, 0)],
                }
                match col(e.b) {
                    Some(c) => a[(y, c + row)] -= 1.0,
                    None => b[y] += if row == 0 { 1.0 } else { 0.0 },
                }
            }
        }
        let x = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
        for i in 1..4 {
            let want = x[2 * i - 1].atan2(x[2 * i - 2]);
            assert!((t[i].radians() - want).abs() < 1e-9);
        }
        // the 4 degree loop closure is shared evenly: each edge absorbs 1 degree
        for e in &g.edges {
            let step = crate::geom::wrap_pi(t[e.b].radians() - t[e.a].radians()).to_degrees();
            let residual = 1.0 - step;
            assert!((residual - 1.0).abs() < 0.01, "{step}");
        }
    }

    #[test]
    fn straightening_levels_a_tilted_row() {
        let pts: Vec<Vector2<f64>> = (0..5).map(|k| Vector2::new(100.0 * k as f64, -20.0 * k as f64)).collect();
        // the row rises to the right: screen angle atan(0.2)
        assert!((principal_angle(&pts) - 0.2f64.atan()).abs() < 1e-12);
    }

    #[test]
    fn scale_examples() {
        let mut g = graph(2, &[(0, 1, 0.0)]);
        let square = |side: f64| -> Vec<Vector2<f64>> {
            vec![Vector2::new(0.0, 0.0), Vector2::new(side, 0.0), Vector2::new(side, side), Vector2::new(0.0, side)]
        };
        let (a, b) = (square(10.0), square(20.0));
        g.edges[0].matches = a.iter().zip(&b).map(|(p, q)| PointMatch { pi: *p, pj: *q }).collect();
        assert!((scale_ratio(&g, 0, 1).unwrap() - 2.0).abs() < 1e-12);
        let (s, _) = estimate_scales(&g).unwrap();
        assert!((s[0] - 4.0 / 3.0).abs() < 1e-10 && (s[1] - 2.0 / 3.0).abs() < 1e-10);

        let (s, _) = estimate_scales(&chain_with_matches(3, 0.0)).unwrap();
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn scale_sum_is_exact_with_noise() {
        let mut g = chain_with_matches(3, 0.0);
        g.edges.push(StitchEdge {
            a: 0,
            b: 2,
            matches: (0..10)
                .map(|k| PointMatch {
                    pi: Vector2::new(10.0 + 3.0 * (k % 3) as f64, 10.0 + k as f64),
                    pj: Vector2::new(12.0 + 3.3 * (k % 3) as f64, 11.0 + 1.2 * k as f64),
                })
                .collect(),
            ..g.edges[0].clone()
        });
        let (s, _) = estimate_scales(&g).unwrap();
        assert!((s.iter().sum::<f64>() - 3.0).abs() < 1e-10);
        assert!(s.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn divergence_of_perfect_vps() {
        assert_eq!(vp_divergence(&[Some(0.0); 3], &[true; 3], 1.0).unwrap(), 0.0);
        let eps = vp_divergence(&[Some(0.03), Some(0.06), Some(0.9)], &[true, true, false], 2.0 / 3.0).unwrap();
        assert!((eps - 0.09 / 6.0 * 1.5).abs() < 1e-15);
    }
}
