//! Travel corridors, feasible sensing regions and frontier distribution.

use std::collections::{HashSet, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frontier::FrontierSet;
use crate::geometry::{elevation, Aabb, Point, Vector, Viewpoint};
use crate::grid::VoxelKey;
use crate::occupancy::OccupancyMap;
use crate::planner::is_state_valid;
use crate::sensor::{AgentSpec, Motion};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorCell {
    /// Base voxel key (ground) or block index (aerial).
    pub key: VoxelKey,
    /// Where the agent's reference point sits when occupying the cell.
    pub position: Point,
}

/// Known-free cells reachable by one agent from its current configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Corridor {
    pub agent: AgentSpec,
    /// Sorted by key.
    pub cells: Vec<CorridorCell>,
    /// Base voxels per cell edge.
    pub cell_factor: u32,
    /// Cell edge in meters.
    pub cell_size: f64,
}

impl Corridor {
    pub fn empty(agent: &AgentSpec, cell_factor: u32, cell_size: f64) -> Self {
        Self { agent: agent.clone(), cells: Vec::new(), cell_factor, cell_size }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains_key(&self, key: &VoxelKey) -> bool {
        self.cells.binary_search_by(|c| c.key.cmp(key)).is_ok()
    }

    /// Box spanned by the cells, or `None` for an empty corridor.
    pub fn bounding_box(&self) -> Option<Aabb> {
        let half = Vector::repeat(self.cell_size / 2.0);
        self.cells
            .iter()
            .map(|c| Aabb::new(c.position - half, c.position + half))
            .reduce(|a, b| a.union(&b))
    }
}

/// Whether the ground agent fits with its sensor over voxel `key` (x, y only).
pub fn ugv_cell_valid(map: &OccupancyMap, agent: &AgentSpec, key: VoxelKey) -> bool {
    let c = map.grid().center(key);
    is_state_valid(map, agent, &Point::new(c.x, c.y, agent.sensor_height))
}

/// Voxel layer holding the ground agent's sensor.
pub fn ugv_layer(map: &OccupancyMap, agent: &AgentSpec) -> i32 {
    map.grid().key_at(&Point::new(0.0, 0.0, agent.sensor_height)).iz
}

/// Planar corridor of the ground agent: valid cells on its sensor layer,
/// 4-connected to the cell under `q0`. Empty if that cell itself is invalid.
pub fn ugv_corridor(map: &OccupancyMap, agent: &AgentSpec, q0: &Viewpoint) -> Result<Corridor> {
    if agent.motion != Motion::Ground {
        return Err(Error::WrongMotion { name: agent.name.clone() });
    }
    let rho = map.resolution();
    let mut corridor = Corridor::empty(agent, 1, rho);
    let layer = ugv_layer(map, agent);
    let mut start = map.grid().key_at(&q0.position);
    start.iz = layer;
    if !map.grid().contains_key(start) || !ugv_cell_valid(map, agent, start) {
        return Ok(corridor);
    }
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut keys = Vec::new();
    while let Some(k) = queue.pop_front() {
        keys.push(k);
        for n in [k.offset(1, 0, 0), k.offset(-1, 0, 0), k.offset(0, 1, 0), k.offset(0, -1, 0)] {
            if map.grid().contains_key(n) && !seen.contains(&n) && ugv_cell_valid(map, agent, n) {
                seen.insert(n);
                queue.push_back(n);
            }
        }
    }
    keys.sort_unstable();
    corridor.cells = keys
        .into_iter()
        .map(|key| {
            let c = map.grid().center(key);
            CorridorCell { key, position: Point::new(c.x, c.y, agent.sensor_height) }
        })
        .collect();
    Ok(corridor)
}

/// Smallest power-of-two block factor whose edge covers the agent's collision box.
pub fn uav_block_factor(agent: &AgentSpec, resolution: f64) -> u32 {
    let mut factor = 1u32;
    while (factor as f64) * resolution < agent.collision_edge() - 1e-9 {
        factor *= 2;
    }
    factor
}

/// Volumetric corridor of the aerial agent: fully free aligned blocks,
/// 6-connected to the block containing `q0`.
pub fn uav_corridor(map: &OccupancyMap, agent: &AgentSpec, q0: &Viewpoint) -> Result<Corridor> {
    if agent.motion != Motion::Aerial {
        return Err(Error::WrongMotion { name: agent.name.clone() });
    }
    let factor = uav_block_factor(agent, map.resolution());
    let mut corridor = Corridor::empty(agent, factor, factor as f64 * map.resolution());
    let free: HashSet<VoxelKey> = map.coarse_free_voxels(factor)?.into_iter().collect();
    let start = map.grid().key_at(&q0.position).block(factor);
    if !free.contains(&start) {
        return Ok(corridor);
    }
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut keys = Vec::new();
    while let Some(k) = queue.pop_front() {
        keys.push(k);
        for n in k.neighbors6() {
            if free.contains(&n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    keys.sort_unstable();
    corridor.cells = keys
        .into_iter()
        .map(|key| CorridorCell { key, position: map.grid().block_center(key, factor) })
        .collect();
    Ok(corridor)
}

/// Whether a sensor of `agent` placed at `candidate` could see `frontier`,
/// occlusion aside.
///
/// Ground agents sense from height `h0` regardless of `candidate.z` and need
/// the frontier inside the vertical field of view; aerial agents may yaw
/// freely, so only range and elevation matter.
pub fn feasible_region_contains(agent: &AgentSpec, frontier: &Point, candidate: &Point) -> bool {
    let s = &agent.sensor;
    match agent.motion {
        Motion::Ground => {
            let dh = frontier.z - agent.sensor_height;
            let r = (frontier.xy() - candidate.xy()).norm();
            r * r + dh * dh <= s.d_max * s.d_max && dh.abs() <= r * (s.fov_v / 2.0).tan()
        }
        Motion::Aerial => {
            nalgebra::distance(frontier, candidate) <= s.d_max && elevation(candidate, frontier).abs() <= s.fov_v / 2.0
        }
    }
}

/// A frontier together with a corridor position that sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub frontier: VoxelKey,
    pub witness: Point,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrontierDistribution {
    pub ugv: Vec<Assignment>,
    pub uav: Vec<Assignment>,
}

impl FrontierDistribution {
    pub fn ugv_keys(&self) -> Vec<VoxelKey> {
        self.ugv.iter().map(|a| a.frontier).collect()
    }

    pub fn uav_keys(&self) -> Vec<VoxelKey> {
        self.uav.iter().map(|a| a.frontier).collect()
    }
}

/// Nearest corridor position that has `frontier` in its feasible region and
/// an unobstructed line of sight to it.
pub fn find_witness(map: &OccupancyMap, corridor: &Corridor, frontier: VoxelKey) -> Option<Point> {
    let target = map.grid().center(frontier);
    let mut candidates: Vec<(f64, &CorridorCell)> = corridor
        .cells
        .iter()
        .filter(|c| feasible_region_contains(&corridor.agent, &target, &c.position))
        .map(|c| (nalgebra::distance_squared(&c.position, &target), c))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.key.cmp(&b.1.key)));
    candidates
        .into_iter()
        .find(|(_, c)| map.line_of_sight(&target, &c.position))
        .map(|(_, c)| c.position)
}

/// Frontiers (in the given order) that `corridor` can observe, with witnesses.
pub fn assign_frontiers(map: &OccupancyMap, corridor: &Corridor, frontiers: &[VoxelKey]) -> Vec<Assignment> {
    if corridor.is_empty() {
        return Vec::new();
    }
    frontiers
        .par_iter()
        .filter_map(|&f| find_witness(map, corridor, f).map(|witness| Assignment { frontier: f, witness }))
        .collect()
}

/// Splits the frontiers between the agents, ground agent first; the aerial
/// agent considers only what the ground agent cannot observe.
pub fn distribute_frontiers(
    frontiers: &FrontierSet,
    ugv_corridor: &Corridor,
    uav_corridor: &Corridor,
    map: &OccupancyMap,
) -> FrontierDistribution {
    let all = frontiers.to_vec();
    let ugv = assign_frontiers(map, ugv_corridor, &all);
    let taken: HashSet<VoxelKey> = ugv.iter().map(|a| a.frontier).collect();
    let rest: Vec<VoxelKey> = all.into_iter().filter(|k| !taken.contains(k)).collect();
    let uav = assign_frontiers(map, uav_corridor, &rest);
    FrontierDistribution { ugv, uav }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupancy::OccupancyState;

    fn known_room(dims: [usize; 3]) -> OccupancyMap {
        crate::sensor::GroundTruthWorld::closed_box(dims, 0.3).unwrap().to_known_map()
    }

    #[test]
    fn empty_room_ground_corridor_keeps_a_wall_margin() {
        let map = known_room([20, 20, 8]);
        let agent = AgentSpec::ugv();
        let q0 = Viewpoint::new(3.0, 3.0, 0.75, 0.0);
        let c = ugv_corridor(&map, &agent, &q0).unwrap();
        // interior voxels 1..=18 span [0.3, 5.7]; centers need 0.5 m clearance -> voxels 3..=16
        assert_eq!(c.len(), 14 * 14);
        assert!(c.cells.iter().all(|cell| cell.key.iz == 2 && (cell.position.z - 0.75).abs() < 1e-12));
    }

    #[test]
    fn bisecting_wall_limits_ground_corridor() {
        let mut w = crate::sensor::GroundTruthWorld::closed_box([20, 20, 8], 0.3).unwrap();
        w.fill(VoxelKey::new(10, 0, 0), VoxelKey::new(10, 19, 7), true);
        let map = w.to_known_map();
        let c = ugv_corridor(&map, &AgentSpec::ugv(), &Viewpoint::new(1.5, 3.0, 0.75, 0.0)).unwrap();
        assert!(!c.is_empty());
        assert!(c.cells.iter().all(|cell| cell.position.x < 3.0));
    }

    #[test]
    fn invalid_start_gives_empty_corridor() {
        let map = known_room([20, 20, 8]);
        let c = ugv_corridor(&map, &AgentSpec::ugv(), &Viewpoint::new(0.4, 3.0, 0.75, 0.0)).unwrap();
        assert!(c.is_empty());
        assert!(ugv_corridor(&map, &AgentSpec::uav(), &Viewpoint::new(3.0, 3.0, 0.75, 0.0)).is_err());
    }

    #[test]
    fn aerial_factor_and_open_cube() {
        let uav = AgentSpec::uav();
        assert_eq!(uav_block_factor(&uav, 0.3), 4);
        // 4.8 m interior cube plus a one-voxel shell on each side
        let mut map = known_room([18, 18, 18]);
        let c = uav_corridor(&map, &uav, &Viewpoint::new(2.7, 2.7, 2.7, 0.0)).unwrap();
        // blocks fully inside voxels 1..=16: block indices 1..=3 need voxels 4..=15 -> 3 per axis
        // (block 0 touches the shell, block 4 would need voxels 16..=19)
        assert_eq!(c.len(), 27);
        assert_eq!(c.cell_size, 1.2);
        map.set_state(VoxelKey::new(9, 9, 9), OccupancyState::Unknown).unwrap();
        assert_eq!(uav_corridor(&map, &uav, &Viewpoint::new(2.7, 2.7, 2.7, 0.0)).unwrap().len(), 0);
    }

    #[test]
    fn feasible_region_examples() {
        let ugv = AgentSpec::ugv();
        assert!(feasible_region_contains(&ugv, &Point::new(1.0, 0.0, 0.75), &Point::new(0.0, 0.0, 0.75)));
        assert!(!feasible_region_contains(&ugv, &Point::new(2.0, 0.0, 1.75), &Point::new(0.0, 0.0, 0.75)));
        assert!(feasible_region_contains(&ugv, &Point::new(2.8, 0.0, 1.75), &Point::new(0.0, 0.0, 0.75)));
        let uav = AgentSpec::uav();
        assert!(!feasible_region_contains(&uav, &Point::new(10.1, 0.0, 0.0), &Point::origin()));
        assert!(feasible_region_contains(&uav, &Point::new(9.9, 0.0, 0.0), &Point::origin()));
        assert!(!feasible_region_contains(&uav, &Point::new(1.0, 0.0, 1.0), &Point::origin()));
    }
}
