//! Planar vectors, angle arithmetic and the discrete action directions.
//!
//! All angles use the branch `(-π, π]`. Angle differences go through
//! [`angular_difference`]; callers never subtract raw bearings.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of discrete movement directions available to a follower.
pub const NUM_ACTIONS: usize = 8;

/// Planar vector in meters (positions) or m/s (velocities). Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_polar(length: f64, angle: f64) -> Self {
        Vec2::new(length * angle.cos(), length * angle.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (other - self).norm()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0).then(|| Vec2::new(self.x / n, self.y / n))
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn clamp_box(self, half_extent: f64) -> Vec2 {
        Vec2::new(
            self.x.clamp(-half_extent, half_extent),
            self.y.clamp(-half_extent, half_extent),
        )
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2::new(x, y)
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Index `j` of one of the eight movement directions `jπ/4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct ActionIndex(u8);

impl ActionIndex {
    pub fn new(j: usize) -> Result<Self> {
        if j < NUM_ACTIONS {
            Ok(ActionIndex(j as u8))
        } else {
            Err(Error::InvalidArgument(format!(
                "action index {j} outside 0..{NUM_ACTIONS}"
            )))
        }
    }

    pub fn all() -> impl Iterator<Item = ActionIndex> {
        (0..NUM_ACTIONS as u8).map(ActionIndex)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Direction angle `jπ/4`, wrapped into `(-π, π]`.
    pub fn angle(self) -> f64 {
        let raw = self.0 as f64 * FRAC_PI_4;
        if raw > PI {
            raw - TAU
        } else {
            raw
        }
    }
}

impl TryFrom<usize> for ActionIndex {
    type Error = Error;
    fn try_from(j: usize) -> Result<Self> {
        ActionIndex::new(j)
    }
}

impl From<ActionIndex> for usize {
    fn from(a: ActionIndex) -> usize {
        a.index()
    }
}

impl fmt::Display for ActionIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Maps `theta` onto its representative in `(-π, π]`.
pub fn wrap_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite angle {theta}")));
    }
    let r = theta.rem_euclid(TAU);
    Ok(if r > PI { r - TAU } else { r })
}

/// Unit vector `(cos(jπ/4), sin(jπ/4))`.
pub fn action_direction(j: ActionIndex) -> Vec2 {
    // Exact values for the axis-aligned and diagonal directions keep the unit
    // norm and the symmetry between opposite actions bit-exact.
    const D: f64 = std::f64::consts::FRAC_1_SQRT_2;
    match j.0 {
        0 => Vec2::new(1.0, 0.0),
        1 => Vec2::new(D, D),
        2 => Vec2::new(0.0, 1.0),
        3 => Vec2::new(-D, D),
        4 => Vec2::new(-1.0, 0.0),
        5 => Vec2::new(-D, -D),
        6 => Vec2::new(0.0, -1.0),
        _ => Vec2::new(D, -D),
    }
}

/// World-frame angle of `to - from`.
pub fn bearing(from: Vec2, to: Vec2) -> Result<f64> {
    let d = to - from;
    if d.x == 0.0 && d.y == 0.0 {
        return Err(Error::DegenerateBearing);
    }
    // atan2 already lands in [-π, π]; only -π needs moving to the closed end.
    let a = d.y.atan2(d.x);
    Ok(if a == -PI { PI } else { a })
}

/// Smallest absolute difference between two angles, in `[0, π]`.
pub fn angular_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % TAU;
    d.min(TAU - d)
}
