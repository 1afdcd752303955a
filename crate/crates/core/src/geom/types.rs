use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// A direction in 3D. Vanishing directions are axes, so comparisons that
/// matter to the pipeline go through [`UnitVec3::axis_distance_sq`], which is
/// blind to sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitVec3(Vector3<f64>);

impl UnitVec3 {
    /// Normalizes `v`; `None` when it has (numerically) zero length.
    pub fn new(v: Vector3<f64>) -> Option<Self> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return None;
        }
        Some(UnitVec3(v / n))
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Option<Self> {
        Self::new(Vector3::new(x, y, z))
    }

    pub fn x_axis() -> Self {
        UnitVec3(Vector3::x())
    }
    pub fn y_axis() -> Self {
        UnitVec3(Vector3::y())
    }
    pub fn z_axis() -> Self {
        UnitVec3(Vector3::z())
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_vector(self) -> Vector3<f64> {
        self.0
    }

    pub fn dot(&self, other: &UnitVec3) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn cross(&self, other: &UnitVec3) -> Option<UnitVec3> {
        UnitVec3::new(self.0.cross(&other.0))
    }

    /// Squared distance between the two axes: `min(|a - b|^2, |a + b|^2)`.
    pub fn axis_distance_sq(&self, other: &UnitVec3) -> f64 {
        2.0 - 2.0 * self.dot(other).abs()
    }

    /// Angle between the two axes, in [0, pi/2].
    pub fn axis_angle(&self, other: &UnitVec3) -> f64 {
        self.dot(other).abs().min(1.0).acos()
    }

    pub fn flipped(&self) -> UnitVec3 {
        UnitVec3(-self.0)
    }
}

/// A proper rotation in 3D.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot3(Matrix3<f64>);

impl Default for Rot3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rot3 {
    pub fn identity() -> Self {
        Rot3(Matrix3::identity())
    }

    /// Wraps `m` after checking orthonormality and orientation to 1e-9.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if !(err <= 1e-9) || (m.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::DegenerateConfiguration(format!(
                "matrix is not a rotation (orthogonality error {err:.3e})"
            )));
        }
        Ok(Rot3(m))
    }

    /// Nearest rotation in Frobenius norm (orthogonal polar factor with the
    /// determinant forced to +1).
    pub fn nearest(m: &Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateConfiguration("non-finite matrix".into()));
        }
        let svd = m.svd(true, true);
        let (Some(mut u), Some(v_t)) = (svd.u, svd.v_t) else {
            return Err(Error::DegenerateConfiguration("svd failed".into()));
        };
        if (u * v_t).determinant() < 0.0 {
            let (min_idx, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
            u.column_mut(min_idx).neg_mut();
        }
        Ok(Rot3(u * v_t))
    }

    pub fn from_axis_angle(w: &Vector3<f64>) -> Self {
        let theta = w.norm();
        let k = skew(w);
        if theta < 1e-12 {
            return Rot3(Matrix3::identity() + k + 0.5 * k * k);
        }
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / (theta * theta);
        Rot3(Matrix3::identity() + a * k + b * k * k)
    }

    /// Axis-angle vector of this rotation.
    pub fn log(&self) -> Vector3<f64> {
        let m = &self.0;
        let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let theta = cos.acos();
        let v = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        if theta < 1e-7 {
            return 0.5 * v;
        }
        if PI - theta < 1e-6 {
            // near pi: axis from the symmetric part
            let s = (m + Matrix3::identity()) * 0.5;
            let mut best = 0;
            for i in 1..3 {
                if s[(i, i)] > s[(best, best)] {
                    best = i;
                }
            }
            let mut axis: Vector3<f64> = s.column(best).into();
            axis /= axis.norm();
            if axis.dot(&v) < 0.0 {
                axis = -axis;
            }
            return axis * theta;
        }
        v * (theta / (2.0 * theta.sin()))
    }

    pub fn rx(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rot3(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }
    pub fn ry(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rot3(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }
    pub fn rz(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rot3(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Rot3 {
        Rot3(self.0.transpose())
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Geodesic angle between two rotations, radians.
    pub fn angle_to(&self, other: &Rot3) -> f64 {
        (self.transpose() * *other).log().norm()
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_row_slice(v))
    }
}

impl Mul for Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0)
    }
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// A planar angle kept in (-pi, pi].
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Angle2D(f64);

impl Angle2D {
    pub fn new(radians: f64) -> Self {
        Angle2D(wrap_pi(radians))
    }

    pub fn from_degrees(deg: f64) -> Self {
        Self::new(deg.to_radians())
    }

    /// Angle of the vector `(x, y)`; `None` for the zero vector.
    pub fn from_vector(x: f64, y: f64) -> Option<Self> {
        if x.hypot(y) < 1e-300 {
            return None;
        }
        Some(Self::new(y.atan2(x)))
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    pub fn unit_vector(self) -> Vector2<f64> {
        let (s, c) = self.0.sin_cos();
        Vector2::new(c, s)
    }

    /// Standard counter-clockwise rotation matrix for this angle.
    pub fn rotation(self) -> Matrix2<f64> {
        let (s, c) = self.0.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    /// Rotation of pixel coordinates (x right, y down) that turns image
    /// content counter-clockwise as displayed, by this angle.
    pub fn image_rotation(self) -> Matrix2<f64> {
        let (s, c) = self.0.sin_cos();
        Matrix2::new(c, s, -s, c)
    }
}

impl Add for Angle2D {
    type Output = Angle2D;
    fn add(self, rhs: Angle2D) -> Angle2D {
        Angle2D::new(self.0 + rhs.0)
    }
}

impl Sub for Angle2D {
    type Output = Angle2D;
    fn sub(self, rhs: Angle2D) -> Angle2D {
        Angle2D::new(self.0 - rhs.0)
    }
}

impl Neg for Angle2D {
    type Output = Angle2D;
    fn neg(self) -> Angle2D {
        Angle2D::new(-self.0)
    }
}

pub fn wrap_pi(r: f64) -> f64 {
    if !r.is_finite() {
        return r;
    }
    let mut a = r % TAU;
    if a <= -PI {
        a += TAU;
    } else if a > PI {
        a -= TAU;
    }
    a
}

/// A planar projective transform, stored with `h33 = 1` whenever `h33 != 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateConfiguration("non-finite homography".into()));
        }
        let m = if m[(2, 2)].abs() > 1e-12 { m / m[(2, 2)] } else { m };
        if !(m.determinant().abs() > 1e-12) {
            return Err(Error::DegenerateConfiguration("homography is not invertible".into()));
        }
        Ok(Homography(m))
    }

    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Maps a point; `None` when it lands on the line at infinity.
    pub fn apply(&self, p: &Vector2<f64>) -> Option<Vector2<f64>> {
        let v = self.0 * Vector3::new(p.x, p.y, 1.0);
        if v.z.abs() < 1e-15 {
            return None;
        }
        Some(Vector2::new(v.x / v.z, v.y / v.z))
    }

    /// Fails only when renormalizing the inverse by its `h33` pushes the
    /// determinant under the invertibility floor.
    pub fn inverse(&self) -> Result<Homography> {
        let inv = self
            .0
            .try_inverse()
            .ok_or_else(|| Error::DegenerateConfiguration("homography is not invertible".into()))?;
        Homography::new(inv)
    }

    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        Homography::new(self.0 * other.0)
    }

    /// Determinant of the Jacobian of the point map at `(x, y)`:
    /// `det(H) / w^3` with `w = h31 x + h32 y + h33`.
    pub fn jacobian_det(&self, x: f64, y: f64) -> f64 {
        let m = &self.0;
        let w = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
        m.determinant() / (w * w * w)
    }
}
