//! Unit quaternions, axis-angle conversion and roll/pitch/yaw helpers.
//!
//! Quaternions are stored in `(x, y, z, w)` order. Roll/pitch/yaw follow the
//! intrinsic Z-Y-X convention: `q = Rz(yaw) * Ry(pitch) * Rx(roll)`.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Below this value of `sqrt(1 - w^2)` the rotation axis is numerically
/// meaningless and the fallback axis is used.
pub const AXIS_EPSILON: f64 = 1e-6;

/// Accepted deviation from unit norm for quaternion and axis inputs.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Axis used when no previous valid axis exists.
pub const DEFAULT_AXIS: [f64; 3] = [0.0, 0.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl From<[f64; 4]> for Quaternion {
    fn from(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        [q.x, q.y, q.z, q.w]
    }
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        w: 1.0,
    };

    pub const fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Quaternion { x, y, z, w }
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.w.is_finite()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Quaternion::new(self.x / n, self.y / n, self.z / n, self.w / n)
    }

    /// Errors unless `| |q| - 1 | <= UNIT_TOLERANCE`; returns the renormalized quaternion.
    pub fn checked_unit(&self) -> Result<Self> {
        let n = self.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NonUnitQuaternion(n));
        }
        Ok(self.normalized())
    }

    pub fn conjugate(&self) -> Self {
        Quaternion::new(-self.x, -self.y, -self.z, self.w)
    }

    pub fn neg(&self) -> Self {
        Quaternion::new(-self.x, -self.y, -self.z, -self.w)
    }

    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z + self.w * o.w
    }

    /// Representative of the double cover with `w >= 0`.
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            self.neg()
        } else {
            *self
        }
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let u = self.vector();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let (x, y, z, w) = (self.x, self.y, self.z, self.w);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Quaternion::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
                0.25 * s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            Quaternion::new(
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(2, 1)] - m[(1, 2)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            Quaternion::new(
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
            )
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            Quaternion::new(
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        };
        q.normalized().canonical()
    }

    /// Rotation about a principal axis, `axis` in {0: x, 1: y, 2: z}.
    pub fn about_principal(axis: usize, angle: f64) -> Self {
        let (s, c) = (angle * 0.5).sin_cos();
        match axis {
            0 => Quaternion::new(s, 0.0, 0.0, c),
            1 => Quaternion::new(0.0, s, 0.0, c),
            _ => Quaternion::new(0.0, 0.0, s, c),
        }
    }

    /// Rotation about an axis that is assumed unit length (no check).
    pub fn from_axis_angle_unchecked(axis: &Vec3, angle: f64) -> Self {
        let (s, c) = (angle * 0.5).sin_cos();
        Quaternion::new(axis.x * s, axis.y * s, axis.z * s, c)
    }

    /// Exponential map of a rotation vector.
    pub fn from_rotation_vector(m: &Vec3) -> Self {
        let angle = m.norm();
        if angle < 1e-12 {
            // first-order expansion keeps tiny rotations exact to rounding
            return Quaternion::new(0.5 * m.x, 0.5 * m.y, 0.5 * m.z, 1.0).normalized();
        }
        Self::from_axis_angle_unchecked(&(m / angle), angle)
    }

    /// Logarithm of the canonical representative, as a rotation vector with
    /// angle in `[0, pi]`. Uses `atan2` so it stays accurate for tiny angles.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let q = self.canonical();
        let v = q.vector();
        let s = v.norm();
        if s < 1e-15 {
            return 2.0 * v;
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::about_principal(2, yaw) * Self::about_principal(1, pitch) * Self::about_principal(0, roll)
    }

    /// `(roll, pitch, yaw)` under intrinsic Z-Y-X.
    pub fn to_rpy(&self) -> [f64; 3] {
        let (x, y, z, w) = (self.x, self.y, self.z, self.w);
        let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
        let sp = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
        let pitch = sp.asin();
        let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
        [roll, pitch, yaw]
    }

    pub fn yaw(&self) -> f64 {
        self.to_rpy()[2]
    }

    /// Spherical linear interpolation along the shorter arc.
    pub fn slerp(&self, other: &Quaternion, t: f64) -> Self {
        let mut b = *other;
        let mut d = self.dot(&b);
        if d < 0.0 {
            b = b.neg();
            d = -d;
        }
        if d > 1.0 - 1e-12 {
            let q = Quaternion::new(
                self.x + t * (b.x - self.x),
                self.y + t * (b.y - self.y),
                self.z + t * (b.z - self.z),
                self.w + t * (b.w - self.w),
            );
            return q.normalized();
        }
        let theta = d.clamp(-1.0, 1.0).acos();
        let s = theta.sin();
        let wa = ((1.0 - t) * theta).sin() / s;
        let wb = (t * theta).sin() / s;
        Quaternion::new(
            wa * self.x + wb * b.x,
            wa * self.y + wb * b.y,
            wa * self.z + wb * b.z,
            wa * self.w + wb * b.w,
        )
    }

    /// Orientation with roll and pitch kept and yaw removed.
    pub fn without_yaw(&self) -> Self {
        let [r, p, _] = self.to_rpy();
        Quaternion::from_rpy(r, p, 0.0)
    }

    /// True when `self` and `other` are the same rotation within `tol`
    /// (component-wise, up to sign).
    pub fn same_rotation(&self, other: &Quaternion, tol: f64) -> bool {
        let close = |a: &Quaternion, b: &Quaternion| {
            (a.x - b.x).abs() <= tol
                && (a.y - b.y).abs() <= tol
                && (a.z - b.z).abs() <= tol
                && (a.w - b.w).abs() <= tol
        };
        close(self, other) || close(self, &other.neg())
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion::new(
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: Vec3,
    pub angle: f64,
    /// Set when the axis came from the fallback instead of the quaternion.
    pub used_fallback: bool,
}

impl AxisAngle {
    pub fn rotation_vector(&self) -> Vec3 {
        self.axis * self.angle
    }
}

/// Converts a unit quaternion to axis-angle form with `angle = 2 acos(w)` and
/// `axis = v / sqrt(1 - w^2)`, after canonicalizing to `w >= 0`.
///
/// When `sqrt(1 - w^2) < AXIS_EPSILON` the axis is `last_axis` (the most recent
/// valid axis for the same joint) or `DEFAULT_AXIS` when there is none.
pub fn quat_to_axis_angle(q: &Quaternion, last_axis: Option<&Vec3>) -> Result<AxisAngle> {
    let q = q.checked_unit()?.canonical();
    let w = q.w.min(1.0);
    let angle = 2.0 * w.acos();
    let s = (1.0 - w * w).max(0.0).sqrt();
    if s < AXIS_EPSILON {
        let axis = last_axis.copied().unwrap_or_else(|| Vec3::from(DEFAULT_AXIS));
        return Ok(AxisAngle {
            axis,
            angle,
            used_fallback: true,
        });
    }
    Ok(AxisAngle {
        axis: q.vector() / s,
        angle,
        used_fallback: false,
    })
}

/// Builds `(axis * sin(angle/2), cos(angle/2))`. The axis must be unit length.
pub fn axis_angle_to_quat(axis: &Vec3, angle: f64) -> Result<Quaternion> {
    let n = axis.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitAxis(n));
    }
    Ok(Quaternion::from_axis_angle_unchecked(&(axis / n), angle))
}

/// Signed rotation angle of `q` about `axis`: the axis-angle vector of `q`
/// dotted with `axis`.
pub fn project_to_axis(q: &Quaternion, axis: &Vec3) -> f64 {
    q.normalized().to_rotation_vector().dot(axis)
}

/// Keeps the most recent valid axis per joint so that near-identity
/// rotations reuse it.
#[derive(Debug, Clone, Default)]
pub struct AxisTracker {
    last: Option<Vec3>,
}

impl AxisTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn convert(&mut self, q: &Quaternion) -> Result<AxisAngle> {
        let aa = quat_to_axis_angle(q, self.last.as_ref())?;
        if !aa.used_fallback {
            self.last = Some(aa.axis);
        }
        Ok(aa)
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = a.rem_euclid(two_pi);
    if r > PI {
        r -= two_pi;
    }
    // rem_euclid can return exactly two_pi for tiny negative inputs
    if r <= -PI {
        r += two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn identity_uses_default_axis() {
        let aa = quat_to_axis_angle(&Quaternion::IDENTITY, None).unwrap();
        assert_eq!(aa.angle, 0.0);
        assert!(aa.used_fallback);
        assert_eq!(aa.axis, Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn small_angle_reuses_last_axis() {
        let last = Vec3::new(0.0, 1.0, 0.0);
        let q = Quaternion::from_axis_angle_unchecked(&Vec3::x(), 1e-7);
        let aa = quat_to_axis_angle(&q, Some(&last)).unwrap();
        assert!(aa.used_fallback);
        assert_eq!(aa.axis, last);
        assert_abs_diff_eq!(aa.angle, 1e-7, epsilon = 1e-8);
    }

    #[test]
    fn tracker_remembers_valid_axis() {
        let mut t = AxisTracker::new();
        let a = t
            .convert(&Quaternion::from_axis_angle_unchecked(&Vec3::y(), 0.4))
            .unwrap();
        assert!(!a.used_fallback);
        let b = t.convert(&Quaternion::IDENTITY).unwrap();
        assert!(b.used_fallback);
        assert_abs_diff_eq!(b.axis, Vec3::y(), epsilon = 1e-12);
    }

    #[test]
    fn quarter_turn_about_x() {
        let s = FRAC_PI_4.sin();
        let q = Quaternion::new(s, 0.0, 0.0, FRAC_PI_4.cos());
        let aa = quat_to_axis_angle(&q, None).unwrap();
        assert_abs_diff_eq!(aa.angle, PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(aa.axis, Vec3::x(), epsilon = 1e-12);
    }

    #[test]
    fn negative_w_is_canonicalized() {
        let q = Quaternion::from_axis_angle_unchecked(&Vec3::z(), 0.5).neg();
        let aa = quat_to_axis_angle(&q, None).unwrap();
        assert_abs_diff_eq!(aa.angle, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(aa.axis, Vec3::z(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_unit() {
        assert!(matches!(
            quat_to_axis_angle(&Quaternion::new(0.0, 0.0, 0.0, 1.1), None),
            Err(Error::NonUnitQuaternion(_))
        ));
        assert!(matches!(
            axis_angle_to_quat(&Vec3::new(1.0, 1.0, 0.0), 0.3),
            Err(Error::NonUnitAxis(_))
        ));
    }

    #[test]
    fn axis_angle_to_quat_cases() {
        let q = axis_angle_to_quat(&Vec3::new(0.6, 0.0, 0.8), 0.0).unwrap();
        assert_eq!(q, Quaternion::IDENTITY);
        let q = axis_angle_to_quat(&Vec3::z(), PI).unwrap();
        assert_abs_diff_eq!(q.x, 0.0);
        assert_abs_diff_eq!(q.y, 0.0);
        assert_abs_diff_eq!(q.z, 1.0);
        assert_abs_diff_eq!(q.w, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn projection_cases() {
        let axis = Vec3::new(0.0, 0.6, 0.8);
        let q = Quaternion::from_axis_angle_unchecked(&axis, 0.7);
        assert_abs_diff_eq!(project_to_axis(&q, &axis), 0.7, epsilon = 1e-12);

        let ortho = Vec3::new(1.0, 0.0, 0.0);
        assert_abs_diff_eq!(project_to_axis(&q, &ortho), 0.0, epsilon = 1e-9);

        // 0.5 rad about an axis at 60 degrees from the target: 0.5 * cos 60
        let tilted = Vec3::new((PI / 3.0).sin(), 0.0, (PI / 3.0).cos());
        let q = Quaternion::from_axis_angle_unchecked(&tilted, 0.5);
        assert_abs_diff_eq!(project_to_axis(&q, &Vec3::z()), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn rpy_round_trip() {
        let q = Quaternion::from_rpy(0.3, -0.7, 2.9);
        let [r, p, y] = q.to_rpy();
        assert_abs_diff_eq!(r, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(p, -0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 2.9, epsilon = 1e-12);
    }

    #[test]
    fn matrix_round_trip() {
        let q = Quaternion::from_rpy(0.2, 0.4, -1.3);
        let back = Quaternion::from_matrix(&q.to_matrix());
        assert!(back.same_rotation(&q, 1e-12));
    }

    #[test]
    fn wrap_angle_branch() {
        assert_abs_diff_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-0.2), -0.2, epsilon = 1e-15);
    }

    #[test]
    fn slerp_midpoint() {
        let a = Quaternion::from_axis_angle_unchecked(&Vec3::z(), 0.2);
        let b = Quaternion::from_axis_angle_unchecked(&Vec3::z(), 0.6);
        let m = a.slerp(&b, 0.5);
        assert!(m.same_rotation(&Quaternion::from_axis_angle_unchecked(&Vec3::z(), 0.4), 1e-12));
    }
}
