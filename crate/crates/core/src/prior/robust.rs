//! Outlier rejection on the dominant-direction residuals and path voting on
//! the initial rolls.

use super::PriorConfig;
use crate::error::{Error, Result};
use crate::geom::{wrap_pi, Angle2D};
use crate::pose::StitchGraph;

/// Inlier flags and inlier ratio. Images without a residual are outliers.
pub fn reject_outliers(residuals: &[Option<f64>], tau: f64) -> Result<(Vec<bool>, f64)> {
    let inliers: Vec<bool> = residuals.iter().map(|e| e.is_some_and(|e| e <= tau)).collect();
    let count = inliers.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(Error::AllOutliers);
    }
    Ok((inliers, count as f64 / residuals.len() as f64))
}

/// Logistic kernel centered at 1/2.
pub fn sigmoid(x: f64, k: f64) -> f64 {
    1.0 / (1.0 + (-k * (x - 0.5)).exp())
}

/// Support and opposition mass gathered from paths starting at `i`.
///
/// A path of length `L` to inlier `t` supports `alpha_i` when `alpha_t`
/// carried back along the path's relative rolls lands within the support
/// tolerance; supporters add `L`, opposers add `f_max + 1 - L`.
fn tally(g: &StitchGraph, i: usize, inliers: &[bool], alpha: &[Option<Angle2D>], cfg: &PriorConfig) -> (f64, f64, usize) {
    let tol = cfg.support_deg.to_radians();
    let a_i = alpha[i].expect("inliers carry a roll").radians();
    let (mut s, mut o, mut paths) = (0.0, 0.0, 0usize);
    let mut visited = vec![false; g.len()];
    visited[i] = true;
    // depth-first over simple paths; `fwd` sums beta along the path from i
    #[allow(clippy::too_many_arguments)]
    fn walk(
        g: &StitchGraph,
        u: usize,
        depth: usize,
        fwd: f64,
        visited: &mut [bool],
        inliers: &[bool],
        visit: &mut dyn FnMut(usize, usize, f64),
        f_max: usize,
    ) {
        if depth == f_max {
            return;
        }
        for (v, _) in g.neighbors(u) {
            if visited[v] || !inliers[v] {
                continue;
            }
            let beta = g.beta(u, v).expect("neighbors share an edge").radians();
            visit(v, depth + 1, fwd + beta);
            visited[v] = true;
            walk(g, v, depth + 1, fwd + beta, visited, inliers, visit, f_max);
            visited[v] = false;
        }
    }
    let f_max = cfg.f_max;
    let mut visit = |t: usize, len: usize, fwd: f64| {
        let predicted = alpha[t].expect("inliers carry a roll").radians() - fwd;
        paths += 1;
        if wrap_pi(predicted - a_i).abs() <= tol {
            s += len as f64;
        } else {
            o += (f_max + 1 - len) as f64;
        }
    };
    walk(g, i, 0, 0.0, &mut visited, inliers, &mut visit, f_max);
    (s, o, paths)
}

/// Path-vote weight per inlier; `None` for outliers. Inliers without any
/// valid path get the neutral weight `sigmoid(1/2) = 1/2`.
pub fn path_vote(g: &StitchGraph, inliers: &[bool], alpha: &[Option<Angle2D>], cfg: &PriorConfig) -> Vec<Option<f64>> {
    (0..g.len())
        .map(|i| {
            if !inliers[i] {
                return None;
            }
            let (s, o, _) = tally(g, i, inliers, alpha, cfg);
            let ratio = if s + o > 0.0 { s / (s + o) } else { 0.5 };
            Some(sigmoid(ratio, cfg.sigmoid_k))
        })
        .collect()
}
