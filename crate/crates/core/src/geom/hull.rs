use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector2;

use super::Angle2D;
use crate::error::{Error, Result};

/// Convex hull (Andrew's monotone chain), counter-clockwise in a y-up frame,
/// collinear points dropped. Fewer than 3 vertices means the input is
/// degenerate.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.iter().copied().filter(|p| p.x.is_finite() && p.y.is_finite()).collect();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let scale = pts
        .iter()
        .fold(0.0f64, |m, p| m.max(p.x.abs()).max(p.y.abs()))
        .max(1.0);
    let eps = 1e-12 * scale * scale;
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for p in pts.iter() {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= eps {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower_len = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= eps {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

/// Perimeter of the convex hull of `points`. A collinear set degenerates to
/// twice the length of its extent.
pub fn hull_perimeter(points: &[Vector2<f64>]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints { found: points.len() });
    }
    let hull = convex_hull(points);
    if hull.len() < 2 {
        return Ok(0.0);
    }
    Ok((0..hull.len())
        .map(|i| (hull[(i + 1) % hull.len()] - hull[i]).norm())
        .sum())
}

/// Minimum-area enclosing rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinAreaRect {
    /// Direction of the `width` side, reduced to (-45, 45] degrees.
    pub orientation: Angle2D,
    pub width: f64,
    pub height: f64,
    pub center: Vector2<f64>,
}

impl MinAreaRect {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

/// Reduces an angle modulo 90 degrees into (-45, 45].
pub fn reduce_quarter_turn(rad: f64) -> f64 {
    let q = FRAC_PI_2;
    let mut a = rad % q;
    if a <= -q / 2.0 {
        a += q;
    } else if a > q / 2.0 {
        a -= q;
    }
    a
}

/// Rotating calipers over the hull edges: one of the rectangle sides is
/// always collinear with a hull edge.
pub fn min_area_rect(points: &[Vector2<f64>]) -> Result<MinAreaRect> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    let mut best: Option<(f64, MinAreaRect)> = None;
    for i in 0..hull.len() {
        let e = hull[(i + 1) % hull.len()] - hull[i];
        let len = e.norm();
        if len == 0.0 {
            continue;
        }
        let angle = reduce_quarter_turn(e.y.atan2(e.x));
        let u = Vector2::new(angle.cos(), angle.sin());
        let v = Vector2::new(-u.y, u.x);
        let (mut umin, mut umax, mut vmin, mut vmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let a = p.dot(&u);
            let b = p.dot(&v);
            umin = umin.min(a);
            umax = umax.max(a);
            vmin = vmin.min(b);
            vmax = vmax.max(b);
        }
        let (w, h) = (umax - umin, vmax - vmin);
        let area = w * h;
        // strict improvement keeps the first edge in hull order on ties
        let improves = match &best {
            None => true,
            Some((a, _)) => area < *a * (1.0 - 1e-12),
        };
        if improves {
            let center = u * (0.5 * (umin + umax)) + v * (0.5 * (vmin + vmax));
            best = Some((
                area,
                MinAreaRect {
                    orientation: Angle2D::new(angle),
                    width: w,
                    height: h,
                    center,
                },
            ));
        }
    }
    best.map(|(_, r)| r).ok_or(Error::DegenerateHull)
}
