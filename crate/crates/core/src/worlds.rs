//! Procedural environments: maze, warehouse and a two-level hall.
//!
//! Layouts are expressed in voxels and tuned for 0.3 m voxels, so that free
//! corridors line up with the 4-voxel blocks an aerial agent flies through.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corridor::{uav_block_factor, ugv_cell_valid};
use crate::error::{Error, Result};
use crate::geometry::{Point, Viewpoint};
use crate::grid::VoxelKey;
use crate::sensor::{AgentSpec, GroundTruthWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorldKind {
    Maze,
    Warehouse,
    Multilevel,
}

impl std::str::FromStr for WorldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maze" => Ok(WorldKind::Maze),
            "warehouse" => Ok(WorldKind::Warehouse),
            "multilevel" => Ok(WorldKind::Multilevel),
            other => Err(Error::InvalidParameter(format!("unknown world kind {other:?}"))),
        }
    }
}

/// Layout of a generated maze, in voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeLayout {
    pub cells_x: usize,
    pub cells_y: usize,
    /// Voxels from one wall band to the next.
    pub pitch: usize,
    pub wall: usize,
    /// Top voxel layer of the walls.
    pub wall_top: usize,
    /// Sealed, roofless cell only observable from above the walls.
    pub vault: Option<(usize, usize)>,
}

impl MazeLayout {
    /// Inclusive voxel range of the free interior of cell `i` along one axis.
    pub fn interior(&self, i: usize) -> (usize, usize) {
        (i * self.pitch + self.wall, (i + 1) * self.pitch - 1)
    }

    /// Key of a floor-level voxel at the middle of cell `(cx, cy)`.
    pub fn cell_floor_key(&self, cx: usize, cy: usize) -> VoxelKey {
        let (x0, x1) = self.interior(cx);
        let (y0, y1) = self.interior(cy);
        VoxelKey::new(((x0 + x1) / 2) as i32, ((y0 + y1) / 2) as i32, 1)
    }
}

#[derive(Debug, Clone)]
pub struct Maze {
    pub world: GroundTruthWorld,
    pub layout: MazeLayout,
}

/// Perfect maze over `cells_x * cells_y` cells (2.4 m pitch, 0.6 m walls).
///
/// All cells except a sealed vault are mutually reachable on the floor. The
/// world has headroom above the walls and an occupied shell.
pub fn generate_maze(seed: u64, cells_x: usize, cells_y: usize, wall_height: f64, resolution: f64) -> Result<Maze> {
    if cells_x < 2 || cells_y < 2 {
        return Err(Error::InvalidParameter("maze needs at least 2x2 cells".into()));
    }
    if !(resolution > 0.0) {
        return Err(Error::InvalidResolution(resolution));
    }
    let pitch = ((2.4 / resolution).round() as usize).max(4);
    let wall = ((0.6 / resolution).round() as usize).clamp(1, pitch - 3);
    let wall_top = ((wall_height / resolution).round() as usize).max(1);
    let nx = cells_x * pitch + wall;
    let ny = cells_y * pitch + wall;
    let nz = wall_top + 9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let vault = (cells_x * cells_y >= 4).then(|| loop {
        let c = (rng.gen_range(0..cells_x), rng.gen_range(0..cells_y));
        if c != (0, 0) {
            break c;
        }
    });
    let layout = MazeLayout { cells_x, cells_y, pitch, wall, wall_top, vault };

    let mut world = GroundTruthWorld::closed_box([nx, ny, nz], resolution)?;
    let top = wall_top as i32;
    // wall bands along both axes
    for i in 0..=cells_x {
        let x0 = (i * pitch) as i32;
        world.fill(VoxelKey::new(x0, 0, 1), VoxelKey::new(x0 + wall as i32 - 1, ny as i32 - 1, top), true);
    }
    for j in 0..=cells_y {
        let y0 = (j * pitch) as i32;
        world.fill(VoxelKey::new(0, y0, 1), VoxelKey::new(nx as i32 - 1, y0 + wall as i32 - 1, top), true);
    }

    // randomized depth-first carving over every cell but the vault
    let mut visited = vec![false; cells_x * cells_y];
    let idx = |x: usize, y: usize| x + cells_x * y;
    if let Some((vx, vy)) = vault {
        visited[idx(vx, vy)] = true;
    }
    let mut stack = vec![(0usize, 0usize)];
    visited[0] = true;
    while let Some(&(x, y)) = stack.last() {
        let mut next: Vec<(usize, usize)> = Vec::with_capacity(4);
        if x > 0 && !visited[idx(x - 1, y)] {
            next.push((x - 1, y));
        }
        if x + 1 < cells_x && !visited[idx(x + 1, y)] {
            next.push((x + 1, y));
        }
        if y > 0 && !visited[idx(x, y - 1)] {
            next.push((x, y - 1));
        }
        if y + 1 < cells_y && !visited[idx(x, y + 1)] {
            next.push((x, y + 1));
        }
        match next.choose(&mut rng) {
            None => {
                stack.pop();
            }
            Some(&(nx_, ny_)) => {
                open_between(&mut world, &layout, (x, y), (nx_, ny_));
                visited[idx(nx_, ny_)] = true;
                stack.push((nx_, ny_));
            }
        }
    }
    Ok(Maze { world, layout })
}

fn open_between(world: &mut GroundTruthWorld, layout: &MazeLayout, a: (usize, usize), b: (usize, usize)) {
    let top = layout.wall_top as i32;
    if a.1 == b.1 {
        let band = a.0.max(b.0) * layout.pitch;
        let (y0, y1) = layout.interior(a.1);
        world.fill(
            VoxelKey::new(band as i32, y0 as i32, 1),
            VoxelKey::new((band + layout.wall) as i32 - 1, y1 as i32, top),
            false,
        );
    } else {
        let band = a.1.max(b.1) * layout.pitch;
        let (x0, x1) = layout.interior(a.0);
        world.fill(
            VoxelKey::new(x0 as i32, band as i32, 1),
            VoxelKey::new(x1 as i32, (band + layout.wall) as i32 - 1, top),
            false,
        );
    }
}

/// Rows of shelving with crossing gaps and boxes stacked on some shelf tops.
pub fn generate_warehouse(seed: u64, dims: [usize; 3], resolution: f64) -> Result<GroundTruthWorld> {
    let [nx, ny, nz] = dims;
    if nx < 24 || ny < 24 || nz < 12 {
        return Err(Error::InvalidParameter("warehouse needs at least 24x24x12 voxels".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = GroundTruthWorld::closed_box(dims, resolution)?;
    let shelf_top = ((nz as i32 - 2) / 2).clamp(4, 7);
    // rows run along x; 2-voxel shelves every 10 voxels, 8-voxel aisles
    let mut y = 9;
    while y + 2 < ny as i32 - 8 {
        let mut x = 9;
        while x < nx as i32 - 9 {
            let len = rng.gen_range(8..=16).min(nx as i32 - 9 - x);
            if len >= 4 {
                world.fill(VoxelKey::new(x, y, 1), VoxelKey::new(x + len - 1, y + 1, shelf_top), true);
                if rng.gen_bool(0.5) {
                    let bx = x + rng.gen_range(0..len - 1);
                    world.fill(VoxelKey::new(bx, y, shelf_top + 1), VoxelKey::new(bx + 1, y + 1, shelf_top + 1), true);
                }
            }
            // crossing gap wide enough for the ground robot
            x += len + 8;
        }
        y += 10;
    }
    Ok(world)
}

/// Two storeys joined by an 8 x 8 voxel opening in the intermediate slab.
///
/// The ground robot cannot leave the lower storey; the upper one is reachable
/// only by air.
pub fn generate_multilevel(seed: u64, nx: usize, ny: usize, resolution: f64) -> Result<GroundTruthWorld> {
    if nx < 32 || ny < 32 {
        return Err(Error::InvalidParameter("multilevel world needs at least 32x32 voxels".into()));
    }
    let nz = 21;
    let slab = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = GroundTruthWorld::closed_box([nx, ny, nz], resolution)?;
    world.fill(VoxelKey::new(0, 0, slab), VoxelKey::new(nx as i32 - 1, ny as i32 - 1, slab), true);
    // opening aligned to the 4-voxel blocks, away from the start corner
    let hx = 4 * rng.gen_range(((nx / 2) / 4) as i32..((nx - 12) / 4) as i32);
    let hy = 4 * rng.gen_range(((ny / 2) / 4) as i32..((ny - 12) / 4) as i32);
    world.fill(VoxelKey::new(hx, hy, slab), VoxelKey::new(hx + 7, hy + 7, slab), false);
    // free-standing pillars on both storeys
    for (z0, z1) in [(1, slab - 1), (slab + 1, nz as i32 - 2)] {
        for _ in 0..(nx * ny / 400).max(2) {
            let px = rng.gen_range(12..nx as i32 - 14);
            let py = rng.gen_range(12..ny as i32 - 14);
            let near_hole = (px - hx).abs() < 12 && (py - hy).abs() < 12;
            if !near_hole {
                world.fill(VoxelKey::new(px, py, z0), VoxelKey::new(px + 1, py + 1, z1), true);
            }
        }
    }
    Ok(world)
}

/// Generates a world of the given kind with the default sizes used by the CLI.
pub fn generate(kind: WorldKind, seed: u64, resolution: f64) -> Result<GroundTruthWorld> {
    match kind {
        WorldKind::Maze => generate_maze(seed, 8, 8, 2.1, resolution).map(|m| m.world),
        WorldKind::Warehouse => generate_warehouse(seed, [64, 64, 16], resolution),
        WorldKind::Multilevel => generate_multilevel(seed, 48, 48, resolution),
    }
}

/// Collision-free start configurations: the ground robot at the first valid
/// cell of its plane (scanning y, then x) and the aerial robot at the nearest
/// fully free block.
pub fn default_starts(world: &GroundTruthWorld, ugv: &AgentSpec, uav: &AgentSpec) -> Result<(Viewpoint, Viewpoint)> {
    let known = world.to_known_map();
    let grid = world.grid();
    let [nx, ny, _] = grid.dims();
    let layer = grid.key_at(&Point::new(0.0, 0.0, ugv.sensor_height)).iz;
    let ugv_start = (0..ny as i32)
        .flat_map(|iy| (0..nx as i32).map(move |ix| VoxelKey::new(ix, iy, layer)))
        .find(|&k| ugv_cell_valid(&known, ugv, k))
        .map(|k| {
            let c = grid.center(k);
            Viewpoint::new(c.x, c.y, ugv.sensor_height, 0.0)
        })
        .ok_or_else(|| Error::InvalidParameter("no collision-free ground start".into()))?;
    let factor = uav_block_factor(uav, grid.resolution());
    let blocks = known.coarse_free_voxels(factor)?;
    let uav_start = blocks
        .iter()
        .map(|&b| grid.block_center(b, factor))
        .min_by(|a, b| {
            let da = nalgebra::distance_squared(a, &ugv_start.position);
            let db = nalgebra::distance_squared(b, &ugv_start.position);
            da.total_cmp(&db)
        })
        .map(|p| Viewpoint::at(p, 0.0))
        .ok_or_else(|| Error::InvalidParameter("no free block for the aerial start".into()))?;
    Ok((ugv_start, uav_start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    /// Floor-level flood fill over free voxels of layer 1.
    fn reachable_floor(world: &GroundTruthWorld, from: VoxelKey) -> Vec<bool> {
        let grid = world.grid();
        let mut seen = vec![false; grid.len()];
        let mut queue = VecDeque::from([from]);
        seen[grid.index(from).unwrap()] = true;
        while let Some(k) = queue.pop_front() {
            for n in [k.offset(1, 0, 0), k.offset(-1, 0, 0), k.offset(0, 1, 0), k.offset(0, -1, 0)] {
                if let Some(i) = grid.index(n) {
                    if !seen[i] && !world.is_occupied(n) {
                        seen[i] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        seen
    }

    #[test]
    fn maze_is_deterministic() {
        let a = generate_maze(7, 8, 8, 2.1, 0.3).unwrap();
        let b = generate_maze(7, 8, 8, 2.1, 0.3).unwrap();
        assert_eq!(a.world, b.world);
        let c = generate_maze(8, 8, 8, 2.1, 0.3).unwrap();
        assert_ne!(a.world, c.world);
    }

    #[test]
    fn maze_cells_are_connected_except_the_vault() {
        for seed in 0..10 {
            let maze = generate_maze(seed, 6, 5, 2.1, 0.3).unwrap();
            let l = &maze.layout;
            let seen = reachable_floor(&maze.world, l.cell_floor_key(0, 0));
            for cy in 0..l.cells_y {
                for cx in 0..l.cells_x {
                    let i = maze.world.grid().index(l.cell_floor_key(cx, cy)).unwrap();
                    assert_eq!(seen[i], Some((cx, cy)) != l.vault, "seed {seed} cell {cx},{cy}");
                }
            }
        }
    }

    #[test]
    fn maze_reachable_floor_matches_flood_fill_count() {
        let maze = generate_maze(7, 8, 8, 2.1, 0.3).unwrap();
        let seen = reachable_floor(&maze.world, maze.layout.cell_floor_key(0, 0));
        let reachable = seen.iter().filter(|&&s| s).count();
        // 63 open cells of 6x6 voxels, plus 62 carved 2x6 doorways of a spanning tree
        assert_eq!(reachable, 63 * 36 + 62 * 12);
    }

    #[test]
    fn maze_is_closed_with_headroom() {
        let maze = generate_maze(3, 4, 4, 2.1, 0.3).unwrap();
        let [nx, ny, nz] = maze.world.grid().dims();
        assert_eq!([nx, ny, nz], [34, 34, 16]);
        assert!(maze.world.is_occupied(VoxelKey::new(5, 5, 0)));
        assert!(maze.world.is_occupied(VoxelKey::new(5, 5, 15)));
        // above the walls is open air
        assert!(!maze.world.is_occupied(VoxelKey::new(1 + 8, 8, 9)));
        assert!(maze.world.is_occupied(VoxelKey::new(8, 8, 7)));
        assert!(generate_maze(3, 1, 4, 2.1, 0.3).is_err());
    }

    #[test]
    fn other_generators_are_deterministic_and_sealed() {
        let a = generate_warehouse(5, [64, 64, 16], 0.3).unwrap();
        assert_eq!(a, generate_warehouse(5, [64, 64, 16], 0.3).unwrap());
        assert!(a.is_occupied(VoxelKey::new(0, 10, 5)));
        let m = generate_multilevel(5, 48, 48, 0.3).unwrap();
        assert_eq!(m, generate_multilevel(5, 48, 48, 0.3).unwrap());
        assert!(m.is_occupied(VoxelKey::new(3, 3, 8)));
    }

    #[test]
    fn default_starts_are_collision_free() {
        let maze = generate_maze(7, 8, 8, 2.1, 0.3).unwrap();
        let (ugv, uav) = default_starts(&maze.world, &AgentSpec::ugv(), &AgentSpec::uav()).unwrap();
        let known = maze.world.to_known_map();
        assert!(crate::planner::is_state_valid(&known, &AgentSpec::ugv(), &ugv.position));
        assert!(crate::planner::is_state_valid(&known, &AgentSpec::uav(), &uav.position));
        assert!((uav.position - Point::new(1.8, 1.8, 1.8)).norm() < 1e-9);
    }
}
