//! Rotation and direction primitives shared by every other module.
//!
//! Rotations are stored as 3x3 matrices; quaternions appear only at
//! ingestion boundaries and inside the attitude filter. All types are
//! immutable values and safe to share across threads.

use std::ops::{Add, Deref, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm below which a vector has no usable direction.
pub const EPS_NORM: f64 = 1e-9;

/// Tolerance for unit-norm and orthonormality invariants.
pub const UNIT_TOL: f64 = 1e-6;

/// A raw 3-vector. Holds accelerometer/gyro triples before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

/// A direction on the unit sphere. Every gravity vector in the pipeline
/// is one of these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitVec3(Vec3);

impl UnitVec3 {
    /// Build from components that are already unit within [`UNIT_TOL`].
    /// Components are stored as given so parsed values round-trip
    /// bit-for-bit.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vec3::new(x, y, z);
        let n = v.norm();
        if !v.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::DegenerateVector { norm: n, eps: UNIT_TOL });
        }
        Ok(UnitVec3(v))
    }

    pub fn as_vec3(&self) -> Vec3 {
        self.0
    }

    /// Flip to the antipodal direction.
    pub fn flipped(&self) -> UnitVec3 {
        UnitVec3(-self.0)
    }
}

impl Deref for UnitVec3 {
    type Target = Vec3;
    fn deref(&self) -> &Vec3 {
        &self.0
    }
}

/// Normalize a vector to a direction.
///
/// Fails with `DegenerateVector` when the norm is at or below
/// [`EPS_NORM`], strictly below any physically meaningful magnitude.
pub fn normalize(v: Vec3) -> Result<UnitVec3> {
    let n = v.norm();
    if !v.is_finite() || n <= EPS_NORM {
        return Err(Error::DegenerateVector { norm: n, eps: EPS_NORM });
    }
    Ok(UnitVec3(v.scale(1.0 / n)))
}

/// Angle between two directions, in degrees within [0, 180].
///
/// The dot product is clamped to exactly [-1, 1]; the differentiable
/// loss path uses its own tighter clamp to bound gradients.
pub fn angle_deg(a: UnitVec3, b: UnitVec3) -> f64 {
    a.dot(&b).clamp(-1.0, 1.0).acos().to_degrees()
}

/// A unit quaternion (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Build from components that are unit within [`UNIT_TOL`].
    /// Components are stored as given so parsed values round-trip
    /// bit-for-bit.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::DegenerateVector { norm: n, eps: UNIT_TOL });
        }
        Ok(Quat { w, x, y, z })
    }

    pub fn from_axis_angle(axis: UnitVec3, angle: f64) -> Quat {
        let half = 0.5 * angle;
        let s = half.sin();
        Quat {
            w: half.cos(),
            x: axis.x * s,
            y: axis.y * s,
            z: axis.z * s,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Renormalize; keeps the filter's quaternion on the unit sphere.
    pub fn normalized(&self) -> Quat {
        let n = self.norm();
        Quat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    /// Hamilton product self * rhs.
    pub fn mul(&self, rhs: &Quat) -> Quat {
        Quat {
            w: self.w * rhs.w - self.x * rhs.x - self.y * rhs.y - self.z * rhs.z,
            x: self.w * rhs.x + self.x * rhs.w + self.y * rhs.z - self.z * rhs.y,
            y: self.w * rhs.y - self.x * rhs.z + self.y * rhs.w + self.z * rhs.x,
            z: self.w * rhs.z + self.x * rhs.y - self.y * rhs.x + self.z * rhs.w,
        }
    }
}

/// Axis selector for the elemental rotations used by the correction head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// A rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot3 {
    pub m: [[f64; 3]; 3],
}

impl Rot3 {
    pub const IDENTITY: Rot3 = Rot3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_rows(r0: [f64; 3], r1: [f64; 3], r2: [f64; 3]) -> Rot3 {
        Rot3 { m: [r0, r1, r2] }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }

    /// Rotations preserve norm, so applying to a direction stays on S2.
    pub fn apply_unit(&self, v: UnitVec3) -> UnitVec3 {
        normalize(self.apply(v.as_vec3())).expect("rotation preserves norm")
    }

    pub fn compose(&self, rhs: &Rot3) -> Rot3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * rhs.m[k][j]).sum();
            }
        }
        Rot3 { m: out }
    }

    pub fn transpose(&self) -> Rot3 {
        let m = &self.m;
        Rot3::from_rows(
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        )
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Check the SO(3) invariants: R^T R = I and det(R) = +1, within `tol`.
    pub fn is_rotation(&self, tol: f64) -> bool {
        let rtr = self.transpose().compose(self);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (rtr.m[i][j] - expect).abs() > tol {
                    return false;
                }
            }
        }
        (self.det() - 1.0).abs() <= tol
    }
}

/// Angle of the relative rotation between two rotation matrices, in
/// degrees.
///
/// Uses atan2 of the skew part against the trace, which stays accurate
/// for tiny angles where the arccos-of-trace form loses resolution.
pub fn rotation_gap_deg(a: &Rot3, b: &Rot3) -> f64 {
    let rel = a.transpose().compose(b).m;
    let sv = Vec3::new(
        rel[2][1] - rel[1][2],
        rel[0][2] - rel[2][0],
        rel[1][0] - rel[0][1],
    )
    .scale(0.5);
    let c = (rel[0][0] + rel[1][1] + rel[2][2] - 1.0) / 2.0;
    sv.norm().atan2(c).to_degrees()
}

/// Right-handed elemental rotation about the X or Y axis.
pub fn euler_rot(axis: Axis, angle: f64) -> Rot3 {
    let (s, c) = angle.sin_cos();
    match axis {
        Axis::X => Rot3::from_rows([1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]),
        Axis::Y => Rot3::from_rows([c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]),
    }
}

/// Rotation matrix of a unit quaternion; quat_to_rot(q) == quat_to_rot(-q).
pub fn quat_to_rot(q: &Quat) -> Rot3 {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    Rot3::from_rows(
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    )
}

/// Convert a direction from the ARKit camera frame (X-right, Y-down,
/// Z-forward) to the EuRoC convention (X-right, Y-forward, Z-up):
/// (gx, gy, gz) -> (gx, gz, -gy).
///
/// Not an involution; the inverse permutation is (gx, -gz, gy).
pub fn arkit_to_euroc(g: UnitVec3) -> UnitVec3 {
    UnitVec3(Vec3::new(g.x, g.z, -g.y))
}

/// Residual pitch/yaw correction angles in radians, |delta| <= DELTA_MAX.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerDelta {
    pub delta_x: f64,
    pub delta_y: f64,
}

/// Bound on each residual correction angle: 45 degrees, in radians.
pub const DELTA_MAX: f64 = std::f64::consts::FRAC_PI_4;

impl EulerDelta {
    pub const ZERO: EulerDelta = EulerDelta { delta_x: 0.0, delta_y: 0.0 };

    /// The tanh head guarantees the bound in the forward pass; this
    /// constructor checks it for values arriving from elsewhere.
    pub fn new(delta_x: f64, delta_y: f64) -> Result<Self> {
        if delta_x.abs() > DELTA_MAX || delta_y.abs() > DELTA_MAX {
            return Err(Error::InvalidConfig(format!(
                "residual angles ({delta_x}, {delta_y}) exceed +/-{DELTA_MAX} rad"
            )));
        }
        Ok(EulerDelta { delta_x, delta_y })
    }
}
