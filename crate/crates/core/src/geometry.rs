//! Vector math, orientation conventions and cone-of-view membership.
//!
//! Orientation convention: yaw rotates about +Y starting from +Z toward +X,
//! pitch lifts the axis toward +Y. Roll spins the view about its own axis and
//! never changes which points a (rotationally symmetric) cone contains.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {axis} out of range"),
        }
    }

    pub fn set_component(&mut self, axis: usize, value: f64) {
        match axis {
            0 => self.x = value,
            1 => self.y = value,
            2 => self.z = value,
            _ => panic!("axis index {axis} out of range"),
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, rhs: f64) -> Vec3 {
        Vec3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Smallest signed difference `to - from`, wrapped into `[-π, π)`.
pub fn angle_delta(from: f64, to: f64) -> f64 {
    wrap_angle(to - from)
}

/// Yaw/pitch/roll in radians, always stored normalized.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OrientationYPR {
    yaw: f64,
    pitch: f64,
    roll: f64,
}

impl OrientationYPR {
    pub const IDENTITY: OrientationYPR = OrientationYPR {
        yaw: 0.0,
        pitch: 0.0,
        roll: 0.0,
    };

    /// Builds a normalized orientation: yaw and roll wrap, pitch clamps.
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self {
            yaw: wrap_angle(yaw),
            pitch: pitch.clamp(-FRAC_PI_2, FRAC_PI_2),
            roll: wrap_angle(roll),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn roll(&self) -> f64 {
        self.roll
    }

    /// Adds per-angle offsets and renormalizes.
    pub fn offset(&self, dyaw: f64, dpitch: f64, droll: f64) -> Self {
        Self::new(self.yaw + dyaw, self.pitch + dpitch, self.roll + droll)
    }

    /// Orientation whose view axis points along `dir`; roll is zero.
    pub fn looking_along(dir: Vec3) -> Option<Self> {
        let d = dir.normalized()?;
        let pitch = d.y.clamp(-1.0, 1.0).asin();
        let yaw = d.x.atan2(d.z);
        Some(Self::new(yaw, pitch, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FovKind {
    Immediate,
    Predicted,
}

impl FovKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FovKind::Immediate => "immediate",
            FovKind::Predicted => "predicted",
        }
    }
}

impl fmt::Display for FovKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A right circular view cone: apex at the user, `full_angle` across.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovSpec {
    pub kind: FovKind,
    /// Full apex angle in radians.
    pub full_angle: f64,
    pub depth: f64,
}

impl FovSpec {
    pub fn new(kind: FovKind, full_angle: f64, depth: f64) -> Result<Self, ConfigError> {
        let spec = Self {
            kind,
            full_angle,
            depth,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_degrees(kind: FovKind, full_angle_deg: f64, depth: f64) -> Result<Self, ConfigError> {
        Self::new(kind, full_angle_deg.to_radians(), depth)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let name = self.kind.as_str();
        if !(self.full_angle > 0.0 && self.full_angle < TAU) {
            return Err(ConfigError::new(
                format!("{name}_fov.angle"),
                "must be > 0 and < 360 degrees",
            ));
        }
        if !(self.depth > 0.0 && self.depth.is_finite()) {
            return Err(ConfigError::new(format!("{name}_fov.depth"), "must be > 0"));
        }
        Ok(())
    }

    /// True when `self` (predicted) covers `other` (immediate) in both angle and depth.
    pub fn dominates(&self, other: &FovSpec) -> bool {
        self.full_angle >= other.full_angle && self.depth >= other.depth
    }

    pub fn cone(&self) -> Cone {
        Cone {
            cos_half: (self.full_angle / 2.0).cos(),
            depth: self.depth,
        }
    }
}

/// A `FovSpec` with its half-angle cosine precomputed for hot loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cone {
    cos_half: f64,
    depth: f64,
}

impl Cone {
    /// Returns `(visible, distance)`; `axis` must be unit length.
    #[inline]
    pub fn contains(&self, user_pos: Vec3, axis: Vec3, obj_pos: Vec3) -> (bool, f64) {
        let rel = obj_pos - user_pos;
        let distance = rel.norm();
        if distance == 0.0 {
            return (true, 0.0);
        }
        if distance > self.depth {
            return (false, distance);
        }
        let cos_angle = (axis.dot(rel) / distance).clamp(-1.0, 1.0);
        (cos_angle >= self.cos_half, distance)
    }
}

/// Unit view direction for an orientation. Roll is ignored.
pub fn view_axis(o: OrientationYPR) -> Vec3 {
    let (sy, cy) = o.yaw.sin_cos();
    let (sp, cp) = o.pitch.sin_cos();
    Vec3::new(cp * sy, sp, cp * cy)
}

/// Cone membership of `obj_pos` for a user at `user_pos` looking along `axis`.
///
/// Closed cone and closed ball: the boundary counts as visible. An object at
/// the user's own position is visible with distance 0.
pub fn fov_contains(user_pos: Vec3, axis: Vec3, fov: &FovSpec, obj_pos: Vec3) -> (bool, f64) {
    fov.cone().contains(user_pos, axis, obj_pos)
}
