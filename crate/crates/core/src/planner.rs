//! Collision checking, RRT path search and path densification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{heading, wrap_angle, Aabb, Point, Vector, Viewpoint};
use crate::occupancy::{OccupancyMap, OccupancyState};
use crate::sensor::{AgentSpec, Motion};

/// Collision boxes are shrunk by this much so that touching a voxel face is
/// not a collision.
const SLACK: f64 = 1e-6;

/// True iff every voxel overlapping the agent's collision box at `position`
/// is Free. Unknown and out-of-map voxels are collisions.
pub fn is_state_valid(map: &OccupancyMap, agent: &AgentSpec, position: &Point) -> bool {
    let h = agent.half_extents.add_scalar(-SLACK);
    map.grid()
        .keys_overlapping(&(position - h), &(position + h))
        .all(|k| map.get(k) == Some(OccupancyState::Free))
}

/// Segment `p + t (q - p)`, `t` in `[0, 1]`, against a closed box.
fn segment_hits_box(p: &Point, q: &Point, lo: &Point, hi: &Point) -> bool {
    let d = q - p;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if p[i] < lo[i] || p[i] > hi[i] {
                return false;
            }
        } else {
            let a = (lo[i] - p[i]) / d[i];
            let b = (hi[i] - p[i]) / d[i];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Exact swept-box test: true iff the collision box moved along `a -> b`
/// never overlaps a non-Free voxel.
pub fn is_edge_valid(map: &OccupancyMap, agent: &AgentSpec, a: &Point, b: &Point) -> bool {
    let rho = map.resolution();
    let h = agent.half_extents.add_scalar(-SLACK);
    let n = ((nalgebra::distance(a, b) / rho).ceil() as usize).max(1);
    let mut prev = *a;
    for i in 1..=n {
        let next = if i == n { *b } else { a + (b - a) * (i as f64 / n as f64) };
        let lo = prev.inf(&next) - h;
        let hi = prev.sup(&next) + h;
        for k in map.grid().keys_overlapping(&lo, &hi) {
            if map.get(k) == Some(OccupancyState::Free) {
                continue;
            }
            // Minkowski sum of the voxel and the box
            let c = map.grid().corner(k);
            if segment_hits_box(&prev, &next, &(c - h), &(c + Vector::repeat(rho) + h)) {
                return false;
            }
        }
        prev = next;
    }
    true
}

/// An ordered list of viewpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub viewpoints: Vec<Viewpoint>,
}

impl Path {
    pub fn new(viewpoints: Vec<Viewpoint>) -> Self {
        Self { viewpoints }
    }

    pub fn len(&self) -> usize {
        self.viewpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.viewpoints.is_empty()
    }

    /// Polyline length in meters.
    pub fn length(&self) -> f64 {
        self.viewpoints.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Inserts interpolated viewpoints so consecutive ones are at most
    /// `spacing` apart. Yaw follows the shorter arc.
    pub fn densify(&self, spacing: f64) -> Path {
        assert!(spacing > 0.0, "spacing must be positive");
        let Some(first) = self.viewpoints.first() else {
            return self.clone();
        };
        let mut out = vec![*first];
        for w in self.viewpoints.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = ((a.distance(&b) / spacing - 1e-9).ceil() as usize).max(1);
            let dyaw = wrap_angle(b.yaw - a.yaw);
            for i in 1..n {
                let t = i as f64 / n as f64;
                out.push(Viewpoint::at(a.position + (b.position - a.position) * t, wrap_angle(a.yaw + dyaw * t)));
            }
            out.push(b);
        }
        Path::new(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrtConfig {
    pub goal_bias: f64,
    /// Extension step in voxels.
    pub step_voxels: f64,
    pub max_iterations: usize,
}

impl Default for RrtConfig {
    fn default() -> Self {
        Self { goal_bias: 0.1, step_voxels: 2.0, max_iterations: 5000 }
    }
}

/// Where RRT draws its random samples.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingDomain {
    /// Uniform over a box.
    Box(Aabb),
    /// Uniform over a union of equal cubes (e.g. corridor cells), given by
    /// their centers and edge length.
    Cells { centers: Vec<Point>, edge: f64 },
}

impl SamplingDomain {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Point {
        match self {
            SamplingDomain::Box(b) => Point::new(
                rng.gen_range(b.min.x..=b.max.x),
                rng.gen_range(b.min.y..=b.max.y),
                rng.gen_range(b.min.z..=b.max.z),
            ),
            SamplingDomain::Cells { centers, edge } => {
                let c = centers[rng.gen_range(0..centers.len())];
                let h = edge / 2.0;
                c + Vector::new(rng.gen_range(-h..=h), rng.gen_range(-h..=h), rng.gen_range(-h..=h))
            }
        }
    }

    fn is_empty(&self) -> bool {
        matches!(self, SamplingDomain::Cells { centers, .. } if centers.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("start configuration is in collision")]
    InvalidStart,
    #[error("goal configuration is in collision")]
    InvalidGoal,
    #[error("no path found within the iteration budget")]
    Exhausted,
}

/// Goal-biased RRT from `q0` to `goal`, sampling from `domain`.
///
/// A direct connection is tried first, then after every extension. Ground
/// agents sample at the height of `q0`. Intermediate viewpoints face along
/// the segment leading to them.
pub fn plan_rrt(
    map: &OccupancyMap,
    agent: &AgentSpec,
    q0: &Viewpoint,
    goal: &Viewpoint,
    domain: &SamplingDomain,
    config: &RrtConfig,
    seed: u64,
) -> Result<Path, PlanError> {
    if !is_state_valid(map, agent, &q0.position) {
        return Err(PlanError::InvalidStart);
    }
    if !is_state_valid(map, agent, &goal.position) {
        return Err(PlanError::InvalidGoal);
    }
    let step = config.step_voxels * map.resolution();
    let mut nodes: Vec<Point> = vec![q0.position];
    let mut parent: Vec<usize> = vec![0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reached = is_edge_valid(map, agent, &q0.position, &goal.position).then_some(0);
    let mut iterations = 0;
    while reached.is_none() && iterations < config.max_iterations {
        iterations += 1;
        let sample = if domain.is_empty() || rng.gen_bool(config.goal_bias) {
            goal.position
        } else {
            let mut s = domain.sample(&mut rng);
            if agent.motion == Motion::Ground {
                s.z = q0.position.z;
            }
            s
        };
        let (near, dist) = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (i, nalgebra::distance_squared(n, &sample)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, d)| (i, d.sqrt()))
            .expect("tree has a root");
        if dist < 1e-9 {
            continue;
        }
        let new = if dist <= step { sample } else { nodes[near] + (sample - nodes[near]) * (step / dist) };
        if !is_state_valid(map, agent, &new) || !is_edge_valid(map, agent, &nodes[near], &new) {
            continue;
        }
        nodes.push(new);
        parent.push(near);
        let idx = nodes.len() - 1;
        if nalgebra::distance(&new, &goal.position) < 1e-9 {
            reached = Some(parent[idx]);
            nodes.pop();
            parent.pop();
        } else if is_edge_valid(map, agent, &new, &goal.position) {
            reached = Some(idx);
        }
    }
    let Some(mut last) = reached else {
        return Err(PlanError::Exhausted);
    };
    let mut chain = vec![goal.position];
    loop {
        chain.push(nodes[last]);
        if last == 0 {
            break;
        }
        last = parent[last];
    }
    chain.reverse();
    let mut viewpoints = Vec::with_capacity(chain.len());
    viewpoints.push(*q0);
    for w in chain.windows(2).take(chain.len().saturating_sub(2)) {
        let yaw = heading(&w[0], &w[1]).unwrap_or(viewpoints.last().unwrap().yaw);
        viewpoints.push(Viewpoint::at(w[1], yaw));
    }
    viewpoints.push(*goal);
    Ok(Path::new(viewpoints))
}
