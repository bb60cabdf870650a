//! Shared geometric primitives.
//!
//! World frame: z is up, +y is the canonical forward direction, the room
//! occupies `[0, width] x [0, depth] x [0, height]`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Tolerance used for "strict" overlap tests: boxes sharing a face do not
/// intersect.
pub const OVERLAP_EPS: f64 = 1e-9;

/// Rotation about the vertical axis in quarter turns, counter-clockwise seen
/// from above. `Deg0` keeps the canonical +y front.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Orientation {
    Deg0,
    Deg90,
    Deg180,
    Deg270,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::Deg0,
        Orientation::Deg90,
        Orientation::Deg180,
        Orientation::Deg270,
    ];

    pub fn degrees(self) -> i64 {
        match self {
            Orientation::Deg0 => 0,
            Orientation::Deg90 => 90,
            Orientation::Deg180 => 180,
            Orientation::Deg270 => 270,
        }
    }

    pub fn from_degrees(deg: i64) -> Option<Self> {
        match deg.rem_euclid(360) {
            0 => Some(Orientation::Deg0),
            90 => Some(Orientation::Deg90),
            180 => Some(Orientation::Deg180),
            270 => Some(Orientation::Deg270),
            _ => None,
        }
    }

    pub fn quarter_turns(self) -> u8 {
        (self.degrees() / 90) as u8
    }

    pub fn compose(self, other: Orientation) -> Orientation {
        Orientation::from_degrees(self.degrees() + other.degrees()).unwrap()
    }

    /// True when x/y extents swap under this rotation.
    pub fn swaps_axes(self) -> bool {
        matches!(self, Orientation::Deg90 | Orientation::Deg270)
    }

    /// Exact (cos, sin) pair.
    pub fn cos_sin(self) -> (f64, f64) {
        match self {
            Orientation::Deg0 => (1.0, 0.0),
            Orientation::Deg90 => (0.0, 1.0),
            Orientation::Deg180 => (-1.0, 0.0),
            Orientation::Deg270 => (0.0, -1.0),
        }
    }

    pub fn rotate2(self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Orientation::Deg0 => (x, y),
            Orientation::Deg90 => (-y, x),
            Orientation::Deg180 => (-x, -y),
            Orientation::Deg270 => (y, -x),
        }
    }

    /// Inverse of [`Orientation::rotate2`].
    pub fn unrotate2(self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Orientation::Deg0 => (x, y),
            Orientation::Deg90 => (y, -x),
            Orientation::Deg180 => (-x, -y),
            Orientation::Deg270 => (-y, x),
        }
    }

    /// Unit forward vector (the rotated +y axis).
    pub fn forward(self) -> (f64, f64) {
        self.rotate2(0.0, 1.0)
    }
}

impl TryFrom<i64> for Orientation {
    type Error = String;

    fn try_from(deg: i64) -> Result<Self, Self::Error> {
        match deg {
            0 | 90 | 180 | 270 => Ok(Orientation::from_degrees(deg).unwrap()),
            other => Err(format!("orientation must be 0, 90, 180 or 270, got {other}")),
        }
    }
}

impl From<Orientation> for i64 {
    fn from(o: Orientation) -> i64 {
        o.degrees()
    }
}

/// Rotation about z by a quarter-turn multiple followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub yaw_deg: Orientation,
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { yaw_deg: Orientation::Deg0, translation: [0.0; 3] }
    }

    pub fn new(yaw: Orientation, translation: Vec3) -> Self {
        Self { yaw_deg: yaw, translation: [translation.x, translation.y, translation.z] }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        let (x, y) = self.yaw_deg.rotate2(p.x, p.y);
        Vec3::new(x + self.translation[0], y + self.translation[1], p.z + self.translation[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb3 {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb3 {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min: [min.x, min.y, min.z], max: [max.x, max.y, max.z] }
    }

    pub fn empty() -> Self {
        Self { min: [f64::INFINITY; 3], max: [f64::NEG_INFINITY; 3] }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.min[a] > self.max[a])
    }

    pub fn grow(&mut self, p: &Vec3) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn union(&self, other: &Aabb3) -> Aabb3 {
        let mut out = *self;
        for a in 0..3 {
            out.min[a] = out.min[a].min(other.min[a]);
            out.max[a] = out.max[a].max(other.max[a]);
        }
        out
    }

    pub fn min_v(&self) -> Vec3 {
        Vec3::new(self.min[0], self.min[1], self.min[2])
    }

    pub fn max_v(&self) -> Vec3 {
        Vec3::new(self.max[0], self.max[1], self.max[2])
    }

    pub fn size(&self) -> Vec3 {
        self.max_v() - self.min_v()
    }

    pub fn center(&self) -> Vec3 {
        (self.min_v() + self.max_v()) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.size().norm()
    }

    /// Positive-volume overlap (face contact does not count).
    pub fn intersects(&self, other: &Aabb3) -> bool {
        (0..3).all(|a| {
            self.min[a] < other.max[a] - OVERLAP_EPS && other.min[a] < self.max[a] - OVERLAP_EPS
        })
    }

    /// Positive-area overlap of the xy projections.
    pub fn intersects_xy(&self, other: &Aabb3) -> bool {
        (0..2).all(|a| {
            self.min[a] < other.max[a] - OVERLAP_EPS && other.min[a] < self.max[a] - OVERLAP_EPS
        })
    }

    pub fn contains(&self, other: &Aabb3, tol: f64) -> bool {
        (0..3).all(|a| other.min[a] >= self.min[a] - tol && other.max[a] <= self.max[a] + tol)
    }

    pub fn contains_point(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }

    /// Squared distance from `p` to the box (0 inside).
    pub fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.min[a] {
                self.min[a] - p[a]
            } else if p[a] > self.max[a] {
                p[a] - self.max[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Slab test. Returns the entry parameter if the ray meets the box within
    /// `[0, t_max]`.
    pub fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut near = (self.min[a] - origin[a]) * inv_dir[a];
            let mut far = (self.max[a] - origin[a]) * inv_dir[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf when the origin sits on a slab plane: treat as inside
            if near.is_nan() {
                near = f64::NEG_INFINITY;
            }
            if far.is_nan() {
                far = f64::INFINITY;
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}
