use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector2};
use rand::Rng;

use super::Homography;
use crate::error::{Error, Result};

fn cross2(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn has_collinear_triple(p: &[Vector2<f64>; 4]) -> bool {
    let scale = p
        .iter()
        .flat_map(|q| (0..4).map(move |k| (q - p[k]).norm()))
        .fold(0.0f64, f64::max);
    if scale == 0.0 {
        return true;
    }
    let tol = 1e-10 * scale * scale;
    [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        .iter()
        .any(|&(a, b, c)| cross2(&p[a], &p[b], &p[c]).abs() <= tol)
}

/// Exact homography through four correspondences, `h33 = 1`.
pub fn dlt_homography_4pt(src: &[Vector2<f64>; 4], dst: &[Vector2<f64>; 4]) -> Result<Homography> {
    if has_collinear_triple(src) || has_collinear_triple(dst) {
        return Err(Error::DegenerateConfiguration("three of the four points are collinear".into()));
    }
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for k in 0..4 {
        let (x, y) = (src[k].x, src[k].y);
        let (u, v) = (dst[k].x, dst[k].y);
        let r = 2 * k;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a
        .full_piv_lu()
        .solve(&b)
        .ok_or_else(|| Error::DegenerateConfiguration("singular 4-point system".into()))?;
    Homography::new(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0))
}

/// Similarity that moves the centroid to the origin and the mean distance to
/// sqrt(2).
fn normalizer(pts: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let c = pts.iter().sum::<Vector2<f64>>() / n;
    let mean = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

/// Least-squares homography from `n >= 4` correspondences (normalized DLT).
pub fn fit_homography(src: &[Vector2<f64>], dst: &[Vector2<f64>]) -> Result<Homography> {
    if src.len() != dst.len() || src.len() < 4 {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least 4 correspondences, got {}",
            src.len().min(dst.len())
        )));
    }
    let ts = normalizer(src);
    let td = normalizer(dst);
    let n = src.len();
    let mut a = DMatrix::<f64>::zeros(2 * n.max(5), 9);
    for k in 0..n {
        let p = ts * src[k].push(1.0);
        let q = td * dst[k].push(1.0);
        let (x, y) = (p.x, p.y);
        let (u, v) = (q.x, q.y);
        a.row_mut(2 * k).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]);
        a.row_mut(2 * k + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]);
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::DegenerateConfiguration("svd failed".into()))?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let h = v_t.row(imin);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("all destination points coincide".into()))?;
    Homography::new(td_inv * hn * ts)
}

/// Symmetric transfer error of one correspondence, pixels.
pub fn transfer_error(h: &Homography, hinv: &Homography, src: &Vector2<f64>, dst: &Vector2<f64>) -> f64 {
    let fwd = h.apply(src).map_or(f64::INFINITY, |p| (p - dst).norm());
    let bwd = hinv.apply(dst).map_or(f64::INFINITY, |p| (p - src).norm());
    0.5 * (fwd + bwd)
}

#[derive(Clone, Debug)]
pub struct RansacHomography {
    pub homography: Homography,
    pub inliers: Vec<usize>,
}

/// RANSAC over 4-point samples followed by a refit on the consensus set.
pub fn ransac_homography<R: Rng>(
    src: &[Vector2<f64>],
    dst: &[Vector2<f64>],
    threshold: f64,
    iterations: usize,
    rng: &mut R,
) -> Result<RansacHomography> {
    let n = src.len().min(dst.len());
    if n < 4 {
        return Err(Error::InsufficientMatches { found: n, required: 4 });
    }
    let consensus = |h: &Homography| -> Vec<usize> {
        let Ok(hinv) = h.inverse() else { return Vec::new() };
        (0..n)
            .filter(|&k| transfer_error(h, &hinv, &src[k], &dst[k]) <= threshold)
            .collect()
    };
    let mut best: Vec<usize> = Vec::new();
    let mut best_h = None;
    for _ in 0..iterations {
        let idx = rand::seq::index::sample(rng, n, 4);
        let s = [src[idx.index(0)], src[idx.index(1)], src[idx.index(2)], src[idx.index(3)]];
        let d = [dst[idx.index(0)], dst[idx.index(1)], dst[idx.index(2)], dst[idx.index(3)]];
        let Ok(h) = dlt_homography_4pt(&s, &d) else { continue };
        let inl = consensus(&h);
        if inl.len() > best.len() {
            best = inl;
            best_h = Some(h);
            if best.len() == n {
                break;
            }
        }
    }
    let Some(mut h) = best_h else {
        return Err(Error::InsufficientMatches { found: 0, required: 4 });
    };
    // refit, then re-collect inliers once with the refined model
    for _ in 0..2 {
        if best.len() < 4 {
            break;
        }
        let s: Vec<_> = best.iter().map(|&k| src[k]).collect();
        let d: Vec<_> = best.iter().map(|&k| dst[k]).collect();
        match fit_homography(&s, &d) {
            Ok(refit) => {
                let inl = consensus(&refit);
                if inl.len() >= best.len() {
                    h = refit;
                    best = inl;
                } else {
                    break;
                }
            }
            Err(_) => break,
        }
    }
    Ok(RansacHomography {
        homography: h,
        inliers: best,
    })
}
