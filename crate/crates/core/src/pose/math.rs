//! Small fixed-size vector and quaternion math in double precision.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use super::PoseError;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };
    pub const FORWARD: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self + (other - self) * u`; returns `self` bit-exactly when the
    /// endpoints are equal.
    pub fn lerp(self, other: Vec3, u: f64) -> Vec3 {
        self + (other - self) * u
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Rotation quaternion, `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

/// Below this angle slerp falls back to normalized linear interpolation.
const SLERP_LINEAR_ANGLE: f64 = 1e-6;

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    /// Rotation by `angle` radians about +y.
    pub fn from_yaw(angle: f64) -> Self {
        let (s, c) = (angle * 0.5).sin_cos();
        Quat::new(c, 0.0, s, 0.0)
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis * (1.0 / axis.norm());
        let (s, c) = (angle * 0.5).sin_cos();
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn scale(self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotates a vector by this (unit) quaternion.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotation matrix columns.
    pub fn to_matrix(self) -> [Vec3; 3] {
        let Quat { w, x, y, z } = self;
        [
            Vec3::new(
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y + w * z),
                2.0 * (x * z - w * y),
            ),
            Vec3::new(
                2.0 * (x * y - w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z + w * x),
            ),
            Vec3::new(
                2.0 * (x * z + w * y),
                2.0 * (y * z - w * x),
                1.0 - 2.0 * (x * x + y * y),
            ),
        ]
    }

    /// Quaternion from an orthonormal matrix given by columns (Shepperd's
    /// method). The result has `w >= 0`.
    pub fn from_matrix(cols: [Vec3; 3]) -> Quat {
        let (m00, m10, m20) = (cols[0].x, cols[0].y, cols[0].z);
        let (m01, m11, m21) = (cols[1].x, cols[1].y, cols[1].z);
        let (m02, m12, m22) = (cols[2].x, cols[2].y, cols[2].z);
        let trace = m00 + m11 + m22;
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new(0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s)
        } else if m00 > m11 && m00 > m22 {
            let s = (1.0 + m00 - m11 - m22).sqrt() * 2.0;
            Quat::new((m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s)
        } else if m11 > m22 {
            let s = (1.0 + m11 - m00 - m22).sqrt() * 2.0;
            Quat::new((m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s)
        } else {
            let s = (1.0 + m22 - m00 - m11).sqrt() * 2.0;
            Quat::new((m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s)
        };
        let q = q.normalized();
        if q.w < 0.0 {
            q.scale(-1.0)
        } else {
            q
        }
    }

    /// Geodesic angle between the rotations, in `[0, pi]`.
    pub fn angle_to(self, other: Quat) -> f64 {
        let r = self.conjugate() * other;
        let v = Vec3::new(r.x, r.y, r.z).norm();
        2.0 * v.atan2(r.w.abs())
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

impl Neg for Quat {
    type Output = Quat;
    fn neg(self) -> Quat {
        self.scale(-1.0)
    }
}

/// Shortest-path spherical interpolation between unit quaternions.
pub fn slerp(q0: Quat, q1: Quat, u: f64) -> Quat {
    if q0 == q1 {
        return q0;
    }
    let mut q1 = q1;
    let mut d = q0.dot(q1);
    if d < 0.0 {
        q1 = -q1;
        d = -d;
    }
    let theta = d.min(1.0).acos();
    if theta < SLERP_LINEAR_ANGLE {
        return Quat::new(
            q0.w + (q1.w - q0.w) * u,
            q0.x + (q1.x - q0.x) * u,
            q0.y + (q1.y - q0.y) * u,
            q0.z + (q1.z - q0.z) * u,
        )
        .normalized();
    }
    let s = theta.sin();
    let a = ((1.0 - u) * theta).sin() / s;
    let b = (u * theta).sin() / s;
    Quat::new(
        a * q0.w + b * q1.w,
        a * q0.x + b * q1.x,
        a * q0.y + b * q1.y,
        a * q0.z + b * q1.z,
    )
    .normalized()
}

/// First two rotation-matrix columns, `(c0, c1)` flattened.
pub fn rotation_to_6d(q: Quat) -> [f64; 6] {
    let [c0, c1, _] = q.to_matrix();
    [c0.x, c0.y, c0.z, c1.x, c1.y, c1.z]
}

/// Gram-Schmidt orthonormalization of a 6d rotation, returning the three
/// matrix columns.
pub fn orthonormalize_6d(v: &[f64]) -> Result<[Vec3; 3], PoseError> {
    let a = Vec3::from_slice(&v[0..3]);
    let b = Vec3::from_slice(&v[3..6]);
    let (na, nb) = (a.norm(), b.norm());
    if !(na > 0.0 && nb > 0.0) || a.cross(b).norm() <= 1e-8 * na * nb {
        return Err(PoseError::Degenerate6d(v.to_vec()));
    }
    let e1 = a * (1.0 / na);
    let b_perp = b - e1 * e1.dot(b);
    let e2 = b_perp * (1.0 / b_perp.norm());
    Ok([e1, e2, e1.cross(e2)])
}

pub fn rotation_from_6d(v: &[f64]) -> Result<Quat, PoseError> {
    Ok(Quat::from_matrix(orthonormalize_6d(v)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn close(a: Quat, b: Quat, tol: f64) -> bool {
        a.angle_to(b) < tol
    }

    #[test]
    fn slerp_identity_case() {
        let q = Quat::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 0.7);
        assert_eq!(slerp(q, q, 0.7), q);
    }

    #[test]
    fn slerp_geodesic_midpoint() {
        let mid = slerp(Quat::IDENTITY, Quat::from_yaw(FRAC_PI_2), 0.5);
        assert!(close(mid, Quat::from_yaw(FRAC_PI_4), 1e-12));
    }

    #[test]
    fn slerp_antipodal() {
        let q = Quat::from_axis_angle(Vec3::new(0.0, 1.0, 1.0), 1.1);
        for u in [0.0, 0.3, 1.0] {
            let r = slerp(q, -q, u);
            assert!((r.dot(q) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_to_6d() {
        assert_eq!(
            rotation_to_6d(Quat::IDENTITY),
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn gram_schmidt_second_column() {
        let cols = orthonormalize_6d(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(cols[1], Vec3::new(0.0, 1.0, 0.0));
        assert!(close(
            rotation_from_6d(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap(),
            Quat::IDENTITY,
            1e-12
        ));
    }

    #[test]
    fn collinear_6d_is_degenerate() {
        assert!(rotation_from_6d(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).is_err());
        assert!(rotation_from_6d(&[0.0; 6]).is_err());
    }

    #[test]
    fn yaw_rotates_forward() {
        let f = Quat::from_yaw(FRAC_PI_2).rotate(Vec3::FORWARD);
        assert!((f - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn matrix_matches_rotate() {
        let q = Quat::from_axis_angle(Vec3::new(0.3, -1.0, 0.5), 2.3);
        let m = q.to_matrix();
        let v = Vec3::new(0.2, -0.4, 1.5);
        let by_matrix = m[0] * v.x + m[1] * v.y + m[2] * v.z;
        assert!((by_matrix - q.rotate(v)).norm() < 1e-14);
    }

    fn arb_quat() -> impl Strategy<Value = Quat> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("non-zero", |(w, x, y, z)| {
                w * w + x * x + y * y + z * z > 1e-3
            })
            .prop_map(|(w, x, y, z)| Quat::new(w, x, y, z).normalized())
    }

    proptest! {
        #[test]
        fn slerp_output_is_unit(a in arb_quat(), b in arb_quat(), u in 0.0f64..=1.0) {
            prop_assert!((slerp(a, b, u).norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn slerp_endpoints(a in arb_quat(), b in arb_quat()) {
            prop_assert!(close(slerp(a, b, 0.0), a, 1e-7));
            prop_assert!(close(slerp(a, b, 1.0), b, 1e-7));
        }

        #[test]
        fn six_d_round_trip(q in arb_quat()) {
            let back = rotation_from_6d(&rotation_to_6d(q)).unwrap();
            prop_assert!(q.angle_to(back) < 1e-6);
            prop_assert!((back.norm() - 1.0).abs() < 1e-9);
        }
    }
}
