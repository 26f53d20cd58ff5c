//! Points, boxes and agent configurations shared by every module.

use std::f64::consts::{PI, TAU};

pub type Point = nalgebra::Point3<f64>;
pub type Vector = nalgebra::Vector3<f64>;

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn from_extent(extent: Vector) -> Self {
        Self { min: Point::origin(), max: Point::from(extent) }
    }

    pub fn extent(&self) -> Vector {
        self.max - self.min
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }
}

/// An agent configuration `(x, y, z, yaw)`. Yaw is measured counter-clockwise from +x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewpoint {
    pub position: Point,
    pub yaw: f64,
}

impl Viewpoint {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self { position: Point::new(x, y, z), yaw }
    }

    pub fn at(position: Point, yaw: f64) -> Self {
        Self { position, yaw }
    }

    pub fn distance(&self, other: &Viewpoint) -> f64 {
        nalgebra::distance(&self.position, &other.position)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// Horizontal heading from `from` to `to`, or `None` when they share x and y.
pub fn heading(from: &Point, to: &Point) -> Option<f64> {
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    if dx.abs() < 1e-12 && dy.abs() < 1e-12 {
        None
    } else {
        Some(dy.atan2(dx))
    }
}

/// Azimuth of `target` relative to a sensor at `origin` facing `yaw`, in `(-pi, pi]`.
pub fn relative_azimuth(origin: &Point, yaw: f64, target: &Point) -> f64 {
    let d = target - origin;
    wrap_angle(d.y.atan2(d.x) - yaw)
}

/// Elevation of `target` seen from `origin`, in `[-pi/2, pi/2]`.
pub fn elevation(origin: &Point, target: &Point) -> f64 {
    let d = target - origin;
    d.z.atan2(d.x.hypot(d.y))
}
