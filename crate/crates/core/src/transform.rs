//! Rigid transforms in 3D stored as a unit quaternion plus a translation.
//!
//! Quaternions are kept in `(w, x, y, z)` order, normalized and sign
//! canonicalized (`w >= 0`) after every constructor and operation, so two
//! transforms describing the same motion compare equal component-wise.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[inline]
fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a normalized, sign-canonical quaternion. A zero input yields
    /// the identity.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }.canonical()
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = norm(axis);
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn neg(&self) -> Quaternion {
        Quaternion { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    fn canonical(self) -> Self {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Self::IDENTITY;
        }
        let q = Quaternion { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n };
        // w == 0 leaves a sign ambiguity; settle it on the first nonzero
        // vector component.
        let flip = if q.w != 0.0 {
            q.w < 0.0
        } else if q.x != 0.0 {
            q.x < 0.0
        } else if q.y != 0.0 {
            q.y < 0.0
        } else {
            q.z < 0.0
        };
        if flip {
            q.neg()
        } else {
            q
        }
    }

    /// Hamilton product `self * other`, canonicalized.
    pub fn product(&self, o: &Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn conjugate(&self) -> Quaternion {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let u = [self.x, self.y, self.z];
        let t = cross(u, v);
        let t = [2.0 * t[0], 2.0 * t[1], 2.0 * t[2]];
        let c = cross(u, t);
        [
            v[0] + self.w * t[0] + c[0],
            v[1] + self.w * t[1] + c[1],
            v[2] + self.w * t[2] + c[2],
        ]
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let Quaternion { w, x, y, z } = *self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Converts a rotation matrix (assumed orthonormal, det +1) with
    /// Shepperd's method.
    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Quaternion {
        let trace = m[0][0] + m[1][1] + m[2][2];
        if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quaternion::new(
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quaternion::new(
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quaternion::new(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quaternion::new(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        }
    }
}

/// Roll/pitch/yaw (radians) and translation (meters). The rotation is
/// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerPose {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl EulerPose {
    pub fn from_array(c: [f64; 6]) -> Self {
        EulerPose { roll: c[0], pitch: c[1], yaw: c[2], tx: c[3], ty: c[4], tz: c[5] }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.roll, self.pitch, self.yaw, self.tx, self.ty, self.tz]
    }
}

/// A 6-DoF rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Quaternion,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform =
        RigidTransform { rotation: Quaternion::IDENTITY, translation: [0.0; 3] };

    pub fn new(rotation: Quaternion, translation: Vec3) -> Self {
        RigidTransform { rotation: rotation.canonical(), translation }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Quaternion::IDENTITY, t)
    }

    pub fn from_rotation(q: Quaternion) -> Self {
        Self::new(q, [0.0; 3])
    }

    pub fn rotation(&self) -> Quaternion {
        self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn from_euler(e: &EulerPose) -> Self {
        let qx = Quaternion::from_axis_angle([1.0, 0.0, 0.0], e.roll);
        let qy = Quaternion::from_axis_angle([0.0, 1.0, 0.0], e.pitch);
        let qz = Quaternion::from_axis_angle([0.0, 0.0, 1.0], e.yaw);
        Self::new(qz.product(&qy).product(&qx), [e.tx, e.ty, e.tz])
    }

    /// Inverse of [`RigidTransform::from_euler`]. Pitch is returned in
    /// `[-pi/2, pi/2]`; at gimbal lock the roll absorbs the yaw.
    pub fn to_euler(&self) -> EulerPose {
        let m = self.rotation.to_matrix();
        let pitch = (-m[2][0]).clamp(-1.0, 1.0).asin();
        let (roll, yaw) = if m[2][0].abs() < 1.0 - 1e-12 {
            (m[2][1].atan2(m[2][2]), m[1][0].atan2(m[0][0]))
        } else {
            ((-m[1][2]).atan2(m[1][1]), 0.0)
        };
        let t = self.translation;
        EulerPose { roll, pitch, yaw, tx: t[0], ty: t[1], tz: t[2] }
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let rt = self.rotation.rotate(other.translation);
        RigidTransform::new(
            self.rotation.product(&other.rotation),
            [
                rt[0] + self.translation[0],
                rt[1] + self.translation[1],
                rt[2] + self.translation[2],
            ],
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let qi = self.rotation.conjugate();
        let t = qi.rotate(self.translation);
        RigidTransform::new(qi, [-t[0], -t[1], -t[2]])
    }

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        let r = self.rotation.rotate(p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = self.rotation.to_matrix();
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    /// Builds a transform from a rotation matrix and translation without
    /// checking orthonormality.
    pub fn from_rotation_matrix(r: &[[f64; 3]; 3], t: Vec3) -> Self {
        Self::new(Quaternion::from_matrix(r), t)
    }

    /// The seven components `(w, x, y, z, tx, ty, tz)`.
    pub fn components(&self) -> [f64; 7] {
        let q = self.rotation;
        let t = self.translation;
        [q.w, q.x, q.y, q.z, t[0], t[1], t[2]]
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// Geodesic angle between two rotations, `2 acos(|<q1, q2>|)`, in `[0, pi]`.
///
/// Evaluated as `2 atan2(|v|, |w|)` of the relative rotation, which keeps
/// full precision for nearly identical rotations where `acos` does not.
pub fn quat_angular_distance(q1: &Quaternion, q2: &Quaternion) -> f64 {
    let w = q1.dot(q2);
    // Terms are paired so identical inputs cancel exactly.
    let x = (q1.w * q2.x - q1.x * q2.w) + (q1.z * q2.y - q1.y * q2.z);
    let y = (q1.w * q2.y - q1.y * q2.w) + (q1.x * q2.z - q1.z * q2.x);
    let z = (q1.w * q2.z - q1.z * q2.w) + (q1.y * q2.x - q1.x * q2.y);
    2.0 * (x * x + y * y + z * z).sqrt().atan2(w.abs())
}

pub fn translation_distance(t1: Vec3, t2: Vec3) -> f64 {
    norm(sub(t1, t2))
}
