//! Differentiable information gain and yaw optimization along a path.
//!
//! A frontier `v` visible (unoccluded) from a viewpoint contributes
//!
//! ```text
//! s(v) = σ(k_d (d_max - d)) · σ(k_a (fov_h/2 - |Δψ|)) · σ(k_a (fov_v/2 - |Δφ|))
//! ```
//!
//! where `d` is its range, `Δψ` its azimuth relative to the yaw and `Δφ` its
//! elevation. Only `Δψ` depends on yaw, with `dΔψ/dyaw = -1`.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::geometry::{elevation, wrap_angle, Point};
use crate::grid::VoxelKey;
use crate::occupancy::OccupancyMap;
use crate::planner::Path;
use crate::sensor::{AgentSpec, SensorModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftVisibilityParams {
    /// Range sharpness, per meter.
    pub k_d: f64,
    /// Angular sharpness, per radian.
    pub k_a: f64,
}

impl Default for SoftVisibilityParams {
    fn default() -> Self {
        Self { k_d: 5.0, k_a: 20.0 }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Frontiers inside range and field of view at `(origin, yaw)` with a clear
/// line of sight.
pub fn visible_frontiers(
    map: &OccupancyMap,
    frontiers: &[VoxelKey],
    sensor: &SensorModel,
    origin: &Point,
    yaw: f64,
) -> Vec<VoxelKey> {
    frontiers
        .iter()
        .copied()
        .filter(|&k| {
            let t = map.grid().center(k);
            sensor.covers(origin, yaw, &t) && map.line_of_sight(origin, &t)
        })
        .collect()
}

/// Number of frontiers a sensor at `(origin, yaw)` sees.
pub fn hard_visible_count(
    map: &OccupancyMap,
    frontiers: &[VoxelKey],
    sensor: &SensorModel,
    origin: &Point,
    yaw: f64,
) -> usize {
    visible_frontiers(map, frontiers, sensor, origin, yaw).len()
}

/// Centers of the frontiers within `max_range` of `origin` that are not
/// occluded from it. Independent of yaw.
pub fn visible_set(map: &OccupancyMap, frontiers: &[VoxelKey], origin: &Point, max_range: f64) -> Vec<Point> {
    frontiers
        .iter()
        .map(|&k| map.grid().center(k))
        .filter(|t| nalgebra::distance_squared(origin, t) <= max_range * max_range && map.line_of_sight(origin, t))
        .collect()
}

/// Range beyond which a frontier's soft contribution is negligible
/// (its range factor is below `σ(-10)`).
pub fn soft_range(sensor: &SensorModel, params: &SoftVisibilityParams) -> f64 {
    sensor.d_max + 10.0 / params.k_d
}

/// Yaw-independent parts of the visible frontiers' contributions at one
/// viewpoint: range-elevation weight and absolute bearing of each.
struct ViewTerms {
    weight: Vec<f64>,
    bearing: Vec<f64>,
}

impl ViewTerms {
    fn new(origin: &Point, visible: &[Point], sensor: &SensorModel, params: &SoftVisibilityParams) -> Self {
        let weight = visible
            .iter()
            .map(|t| {
                let d = nalgebra::distance(origin, t);
                sigmoid(params.k_d * (sensor.d_max - d)) * sigmoid(params.k_a * (sensor.fov_v / 2.0 - elevation(origin, t).abs()))
            })
            .collect();
        let bearing = visible.iter().map(|t| (t.y - origin.y).atan2(t.x - origin.x)).collect();
        Self { weight, bearing }
    }

    fn value(&self, yaw: f64, sensor: &SensorModel, k_a: f64) -> f64 {
        if sensor.is_omnidirectional() {
            return self.weight.iter().sum();
        }
        self.weight
            .iter()
            .zip(&self.bearing)
            .map(|(w, b)| w * sigmoid(k_a * (sensor.fov_h / 2.0 - wrap_angle(b - yaw).abs())))
            .sum()
    }

    fn gradient(&self, yaw: f64, sensor: &SensorModel, k_a: f64) -> f64 {
        if sensor.is_omnidirectional() {
            return 0.0;
        }
        self.weight
            .iter()
            .zip(&self.bearing)
            .map(|(w, b)| {
                let dpsi = wrap_angle(b - yaw);
                let s = sigmoid(k_a * (sensor.fov_h / 2.0 - dpsi.abs()));
                let sign = if dpsi > 0.0 {
                    1.0
                } else if dpsi < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                w * s * (1.0 - s) * k_a * sign
            })
            .sum()
    }
}

/// Soft visible-frontier count at `(origin, yaw)`.
pub fn soft_ig(origin: &Point, yaw: f64, visible: &[Point], sensor: &SensorModel, params: &SoftVisibilityParams) -> f64 {
    ViewTerms::new(origin, visible, sensor, params).value(yaw, sensor, params.k_a)
}

/// Analytic derivative of [`soft_ig`] with respect to yaw. A frontier exactly
/// ahead contributes zero.
pub fn soft_ig_yaw_gradient(
    origin: &Point,
    yaw: f64,
    visible: &[Point],
    sensor: &SensorModel,
    params: &SoftVisibilityParams,
) -> f64 {
    ViewTerms::new(origin, visible, sensor, params).gradient(yaw, sensor, params.k_a)
}

/// Hard information gain of a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathIg {
    /// Sum over viewpoints; frontiers seen twice count twice.
    pub value: usize,
    pub per_viewpoint: Vec<usize>,
    /// Distinct frontiers seen from any viewpoint.
    pub unique: usize,
}

pub fn path_hard_ig(map: &OccupancyMap, frontiers: &[VoxelKey], agent: &AgentSpec, path: &Path) -> PathIg {
    let seen: Vec<Vec<VoxelKey>> = path
        .viewpoints
        .par_iter()
        .map(|q| {
            let origin = agent.sensor_origin(q);
            let near: Vec<VoxelKey> = frontiers
                .iter()
                .copied()
                .filter(|&k| nalgebra::distance_squared(&origin, &map.grid().center(k)) <= agent.sensor.d_max.powi(2))
                .collect();
            visible_frontiers(map, &near, &agent.sensor, &origin, q.yaw)
        })
        .collect();
    let per_viewpoint: Vec<usize> = seen.iter().map(Vec::len).collect();
    let unique = seen.iter().flatten().collect::<HashSet<_>>().len();
    PathIg { value: per_viewpoint.iter().sum(), per_viewpoint, unique }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YawOptimization {
    pub path: Path,
    pub before: PathIg,
    pub after: PathIg,
    /// Gradient steps accepted over all stages.
    pub iterations: usize,
}

/// Armijo sufficient-increase constant.
const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const GRAD_TOL: f64 = 1e-6;
/// Angular sharpness schedule, as fractions of `k_a`. Soft visibility of a
/// frontier far outside the field of view has a vanishing gradient at full
/// sharpness, so the ascent starts blurred and sharpens.
const CONTINUATION: [f64; 3] = [1.0 / 16.0, 0.25, 1.0];

/// Optimizes the yaws of the interior viewpoints of `path` by gradient
/// ascent with backtracking on the summed soft gain. Positions and endpoint
/// yaws are untouched. If the hard gain would drop, the input path is
/// returned.
pub fn optimize_path_yaw(
    path: &Path,
    map: &OccupancyMap,
    frontiers: &[VoxelKey],
    agent: &AgentSpec,
    params: &SoftVisibilityParams,
    max_iters: usize,
) -> YawOptimization {
    let before = path_hard_ig(map, frontiers, agent, path);
    let n = path.len();
    if n <= 2 || frontiers.is_empty() {
        return YawOptimization { path: path.clone(), after: before.clone(), before, iterations: 0 };
    }
    let sensor = &agent.sensor;
    let range = soft_range(sensor, params);
    let origins: Vec<Point> = path.viewpoints[1..n - 1].iter().map(|q| agent.sensor_origin(q)).collect();
    let visible: Vec<Vec<Point>> = origins.par_iter().map(|o| visible_set(map, frontiers, o, range)).collect();
    let mut yaws: Vec<f64> = path.viewpoints[1..n - 1].iter().map(|q| q.yaw).collect();
    let mut iterations = 0;

    for fraction in CONTINUATION {
        let p = SoftVisibilityParams { k_d: params.k_d, k_a: params.k_a * fraction };
        let terms: Vec<ViewTerms> = origins.iter().zip(&visible).map(|(o, v)| ViewTerms::new(o, v, sensor, &p)).collect();
        let objective = |y: &[f64]| -> f64 { y.iter().zip(&terms).map(|(&yaw, t)| t.value(yaw, sensor, p.k_a)).sum() };
        let mut value = objective(&yaws);
        for _ in 0..max_iters {
            let grad: Vec<f64> = yaws.iter().zip(&terms).map(|(&yaw, t)| t.gradient(yaw, sensor, p.k_a)).collect();
            let norm2: f64 = grad.iter().map(|g| g * g).sum();
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if norm2.sqrt() < GRAD_TOL {
                break;
            }
            let mut step = std::f64::consts::FRAC_PI_4 / gmax;
            let mut accepted = false;
            while step * gmax > 1e-9 {
                let trial: Vec<f64> = yaws.iter().zip(&grad).map(|(y, g)| wrap_angle(y + step * g)).collect();
                let v = objective(&trial);
                if v >= value + ARMIJO_C * step * norm2 {
                    yaws = trial;
                    value = v;
                    accepted = true;
                    break;
                }
                step *= SHRINK;
            }
            if !accepted {
                break;
            }
            iterations += 1;
        }
    }

    let mut optimized = path.clone();
    for (q, &yaw) in optimized.viewpoints[1..n - 1].iter_mut().zip(&yaws) {
        q.yaw = yaw;
    }
    let after = path_hard_ig(map, frontiers, agent, &optimized);
    if after.value < before.value {
        return YawOptimization { path: path.clone(), after: before.clone(), before, iterations };
    }
    YawOptimization { path: optimized, before, after, iterations }
}
