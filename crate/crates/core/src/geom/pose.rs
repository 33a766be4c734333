//! Rigid transforms stored as position + unit quaternion (x, y, z, w).
//!
//! Quaternions are kept in the `w >= 0` hemisphere so two poses describing the
//! same rotation compare equal component-wise.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Point3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const UNIT_TOLERANCE: f64 = 1e-6;

/// Flip `q` into the `w >= 0` hemisphere. Exact zero `w` keeps the first
/// non-zero vector component positive.
pub fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.coords;
    let flip = if c[3] != 0.0 {
        c[3] < 0.0
    } else if c[0] != 0.0 {
        c[0] < 0.0
    } else if c[1] != 0.0 {
        c[1] < 0.0
    } else {
        c[2] < 0.0
    };
    if flip {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Build a unit quaternion from `[x, y, z, w]`, rejecting non-unit input.
pub fn quat_from_xyzw(xyzw: [f64; 4]) -> Result<UnitQuaternion<f64>> {
    let raw = Quaternion::new(xyzw[3], xyzw[0], xyzw[1], xyzw[2]);
    let norm = raw.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::invalid(format!(
            "quaternion {xyzw:?} is not unit (norm {norm})"
        )));
    }
    // already-unit values pass through untouched so wire round trips are exact
    let q = if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
        UnitQuaternion::new_unchecked(raw)
    } else {
        UnitQuaternion::from_quaternion(raw)
    };
    Ok(canonical(q))
}

pub fn quat_to_xyzw(q: &UnitQuaternion<f64>) -> [f64; 4] {
    let c = q.coords;
    [c[0], c[1], c[2], c[3]]
}

/// Geodesic angle between two orientations, `arccos(2 (q1.q2)^2 - 1)`.
///
/// Both inputs must be unit within 1e-6; the result lies in `[0, pi]` and
/// does not depend on the sign of either quaternion.
pub fn quat_geodesic(q1: &Quaternion<f64>, q2: &Quaternion<f64>) -> Result<f64> {
    for q in [q1, q2] {
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!("non-unit quaternion (norm {n})")));
        }
    }
    Ok(geodesic_unit(q1, q2))
}

/// `quat_geodesic` for inputs already known to be unit.
pub fn geodesic_unit(q1: &Quaternion<f64>, q2: &Quaternion<f64>) -> f64 {
    let dot = q1.coords.dot(&q2.coords);
    (2.0 * dot * dot - 1.0).clamp(-1.0, 1.0).acos()
}

/// Rotation from yaw (z), pitch (y), roll (x), composed yaw * pitch * roll.
pub fn quat_from_ypr(yaw: f64, pitch: f64, roll: f64) -> UnitQuaternion<f64> {
    let z = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
    let y = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), pitch);
    let x = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), roll);
    canonical(z * y * x)
}

pub fn quat_from_axis_angle(axis: &Vector3<f64>, angle: f64) -> UnitQuaternion<f64> {
    match Unit::try_new(*axis, 1e-12) {
        Some(axis) => canonical(UnitQuaternion::from_axis_angle(&axis, angle)),
        None => UnitQuaternion::identity(),
    }
}

/// Angle recovered from the trace of the relative rotation matrix. Used as an
/// independent cross-check of [`quat_geodesic`].
pub fn rotation_trace_angle(q1: &UnitQuaternion<f64>, q2: &UnitQuaternion<f64>) -> f64 {
    let r1: Matrix3<f64> = q1.to_rotation_matrix().into_inner();
    let r2: Matrix3<f64> = q2.to_rotation_matrix().into_inner();
    let rel = r1.transpose() * r2;
    ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub p: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            p: Vector3::zeros(),
            q: UnitQuaternion::identity(),
        }
    }

    pub fn new(p: Vector3<f64>, q: UnitQuaternion<f64>) -> Self {
        Self {
            p,
            q: canonical(renormalize(q)),
        }
    }

    pub fn from_translation(p: Vector3<f64>) -> Self {
        Self::new(p, UnitQuaternion::identity())
    }

    pub fn from_parts(p: [f64; 3], q_xyzw: [f64; 4]) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite position"));
        }
        Ok(Self::new(Vector3::from(p), quat_from_xyzw(q_xyzw)?))
    }

    /// `self * other`: express `other` (given in this pose's frame) in the
    /// parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(self.p + self.q * other.p, self.q * other.q)
    }

    pub fn inverse(&self) -> Pose {
        let qi = self.q.inverse();
        Pose::new(-(qi * self.p), qi)
    }

    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.p + self.q * x
    }

    pub fn transform_point3(&self, x: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.transform_point(&x.coords))
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.q * v
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        self.q.to_rotation_matrix()
    }

    /// Local +z axis expressed in the parent frame.
    pub fn z_axis(&self) -> Vector3<f64> {
        self.q * Vector3::z()
    }

    pub fn position_error(&self, other: &Pose) -> f64 {
        (self.p - other.p).norm()
    }

    pub fn rotation_error(&self, other: &Pose) -> f64 {
        geodesic_unit(self.q.quaternion(), other.q.quaternion())
    }

    /// Position lerp + quaternion slerp, `t` in `[0, 1]`.
    pub fn interpolate(&self, other: &Pose, t: f64) -> Pose {
        let p = self.p.lerp(&other.p, t);
        let q = if self.q.coords.dot(&other.q.coords) < 0.0 {
            let neg = UnitQuaternion::new_unchecked(-other.q.into_inner());
            self.q.slerp(&neg, t)
        } else {
            self.q.slerp(&other.q, t)
        };
        Pose::new(p, q)
    }

    pub fn p_array(&self) -> [f64; 3] {
        [self.p.x, self.p.y, self.p.z]
    }

    pub fn q_array(&self) -> [f64; 4] {
        quat_to_xyzw(&self.q)
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.q.coords.iter()).all(|v| v.is_finite())
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let raw = q.into_inner();
    let n = raw.norm();
    if n > 0.0 && n.is_finite() {
        UnitQuaternion::new_unchecked(raw / n)
    } else {
        UnitQuaternion::identity()
    }
}

/// Wire format `{p: [x, y, z], q: [x, y, z, w]}`.
#[derive(Serialize, Deserialize)]
struct PoseWire {
    p: [f64; 3],
    q: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseWire {
            p: self.p_array(),
            q: self.q_array(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = PoseWire::deserialize(d)?;
        Pose::from_parts(w.p, w.q).map_err(serde::de::Error::custom)
    }
}

pub const DEG: f64 = PI / 180.0;
