//! Goal selection: Monte-Carlo view quality for the ground robot, frontier
//! clusters for the drone.
//!
//! ```text
//! ViewQuality(q) = exp(-lambda * |q - q0|) * f(q)
//! ```
//!
//! with `f` the sampled information gain of a ground corridor cell, or the
//! member count of a frontier cluster.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corridor::{feasible_region_contains, Corridor, CorridorCell};
use crate::error::{Error, Result};
use crate::geometry::{heading, Point, Viewpoint};
use crate::grid::{GridSpec, VoxelKey};
use crate::occupancy::OccupancyMap;
use crate::seed;

/// Rejection-sampling attempts allowed per cell, as a multiple of `n_r`.
pub const ATTEMPT_CAP_FACTOR: usize = 20;

/// Sampled information gain of every ground corridor cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewQualityImage {
    pub cells: Vec<CorridorCell>,
    /// Visible samples per cell, at most `n_r`.
    pub ig: Vec<u32>,
    /// Samples that passed the feasible-region test per cell.
    pub kept: Vec<u32>,
    pub n_r: usize,
    pub seed: u64,
}

impl ViewQualityImage {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn max_ig(&self) -> u32 {
        self.ig.iter().copied().max().unwrap_or(0)
    }

    /// CSV dump with columns `x, y, z, ig`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "y", "z", "ig"])?;
        for (c, ig) in self.cells.iter().zip(&self.ig) {
            out.write_record([
                format!("{:.6}", c.position.x),
                format!("{:.6}", c.position.y),
                format!("{:.6}", c.position.z),
                ig.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Renders the view-quality image of a ground corridor.
///
/// Each cell draws frontiers uniformly without replacement until `n_r` lie in
/// its feasible region, the frontiers run out, or `20 * n_r` draws were made;
/// the cell's gain counts the kept frontiers with a clear line of sight.
/// Every cell uses its own random stream, so the result does not depend on
/// thread scheduling.
pub fn render_view_quality(
    corridor: &Corridor,
    frontiers: &[VoxelKey],
    map: &OccupancyMap,
    n_r: usize,
    seed: u64,
) -> Result<ViewQualityImage> {
    if n_r == 0 {
        return Err(Error::InvalidParameter("n_r must be at least 1".into()));
    }
    let targets: Vec<Point> = frontiers.iter().map(|&k| map.grid().center(k)).collect();
    let results: Vec<(u32, u32)> = corridor
        .cells
        .par_iter()
        .map(|cell| {
            let k = cell.key;
            let stream = seed::derive(seed, &[k.ix as u64, k.iy as u64, k.iz as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            render_cell(map, corridor, &cell.position, &targets, n_r, &mut rng)
        })
        .collect();
    let (ig, kept) = results.into_iter().unzip();
    Ok(ViewQualityImage { cells: corridor.cells.clone(), ig, kept, n_r, seed })
}

fn render_cell(
    map: &OccupancyMap,
    corridor: &Corridor,
    position: &Point,
    targets: &[Point],
    n_r: usize,
    rng: &mut ChaCha8Rng,
) -> (u32, u32) {
    let n = targets.len();
    let budget = n.min(ATTEMPT_CAP_FACTOR * n_r);
    // lazy Fisher-Yates shuffle
    let mut swapped: HashMap<usize, usize> = HashMap::new();
    let (mut kept, mut ig) = (0u32, 0u32);
    for draw in 0..budget {
        if kept as usize == n_r {
            break;
        }
        let j = rng.gen_range(draw..n);
        let pick = swapped.get(&j).copied().unwrap_or(j);
        let displaced = swapped.get(&draw).copied().unwrap_or(draw);
        swapped.insert(j, displaced);
        let target = &targets[pick];
        if feasible_region_contains(&corridor.agent, target, position) {
            kept += 1;
            if map.line_of_sight(position, target) {
                ig += 1;
            }
        }
    }
    (ig, kept)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UgvGoal {
    pub viewpoint: Viewpoint,
    pub key: VoxelKey,
    pub ig: u32,
    pub score: f64,
}

/// Corridor cell maximizing discounted gain; ties go to the cell nearer to
/// `q0`, then to the smaller key. `None` if no allowed cell has positive gain.
pub fn select_ugv_goal(
    image: &ViewQualityImage,
    q0: &Viewpoint,
    lambda: f64,
    excluded: &HashSet<VoxelKey>,
) -> Option<UgvGoal> {
    let mut best: Option<(f64, f64, UgvGoal)> = None;
    for (cell, &ig) in image.cells.iter().zip(&image.ig) {
        if ig == 0 || excluded.contains(&cell.key) {
            continue;
        }
        let d = nalgebra::distance(&cell.position, &q0.position);
        let score = (-lambda * d).exp() * ig as f64;
        let better = match &best {
            None => true,
            Some((bs, bd, bg)) => score
                .total_cmp(bs)
                .then(bd.total_cmp(&d))
                .then(bg.key.cmp(&cell.key))
                .is_gt(),
        };
        if better {
            let yaw = heading(&q0.position, &cell.position).unwrap_or(q0.yaw);
            best = Some((score, d, UgvGoal { viewpoint: Viewpoint::at(cell.position, yaw), key: cell.key, ig, score }));
        }
    }
    best.map(|(_, _, g)| g)
}

/// Frontiers sharing one aligned block of a coarser grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterInfo {
    pub block: VoxelKey,
    /// Mean of the member voxel centers.
    pub center: Point,
    /// Sorted.
    pub members: Vec<VoxelKey>,
}

impl ClusterInfo {
    pub fn count(&self) -> usize {
        self.members.len()
    }
}

/// Groups frontiers by aligned `factor^3` blocks; clusters sorted by block.
pub fn cluster_frontiers(grid: &GridSpec, frontiers: &[VoxelKey], factor: u32) -> Result<Vec<ClusterInfo>> {
    if factor < 2 || !factor.is_power_of_two() {
        return Err(Error::InvalidFactor { factor, min: 2 });
    }
    let mut groups: BTreeMap<VoxelKey, Vec<VoxelKey>> = BTreeMap::new();
    for &k in frontiers {
        groups.entry(k.block(factor)).or_default().push(k);
    }
    Ok(groups
        .into_iter()
        .map(|(block, mut members)| {
            members.sort_unstable();
            let sum = members.iter().fold(Point::origin().coords, |acc, &k| acc + grid.center(k).coords);
            ClusterInfo { block, center: Point::from(sum / members.len() as f64), members }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavGoal {
    pub viewpoint: Viewpoint,
    /// Corridor block the goal sits in.
    pub cell: VoxelKey,
    /// Frontier the goal was chosen to observe.
    pub target: VoxelKey,
    pub cluster: VoxelKey,
    pub score: f64,
}

/// Goals the caller has ruled out for this planning step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Exclusions {
    pub clusters: HashSet<VoxelKey>,
    pub cells: HashSet<VoxelKey>,
}

/// Drone goal: the best cluster by discounted member count; within it the
/// member closest to the cluster center that some corridor cell can see.
/// The goal is the visible cell nearest that member, facing it. Clusters
/// without any visible member fall through to the next best.
pub fn select_uav_goal(
    clusters: &[ClusterInfo],
    corridor: &Corridor,
    map: &OccupancyMap,
    q0: &Viewpoint,
    lambda: f64,
    exclusions: &Exclusions,
) -> Option<UavGoal> {
    let mut ranked: Vec<(f64, &ClusterInfo)> = clusters
        .iter()
        .filter(|c| !exclusions.clusters.contains(&c.block))
        .map(|c| ((-lambda * nalgebra::distance(&c.center, &q0.position)).exp() * c.count() as f64, c))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.block.cmp(&b.1.block)));
    let grid = map.grid();
    for (score, cluster) in ranked {
        let mut members: Vec<(f64, VoxelKey)> = cluster
            .members
            .iter()
            .map(|&k| (nalgebra::distance_squared(&grid.center(k), &cluster.center), k))
            .collect();
        members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, target) in members {
            let t = grid.center(target);
            let mut cells: Vec<(f64, &CorridorCell)> = corridor
                .cells
                .iter()
                .filter(|c| !exclusions.cells.contains(&c.key))
                .filter(|c| feasible_region_contains(&corridor.agent, &t, &c.position))
                .map(|c| (nalgebra::distance_squared(&c.position, &t), c))
                .collect();
            cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.key.cmp(&b.1.key)));
            if let Some((_, cell)) = cells.into_iter().find(|(_, c)| map.line_of_sight(&c.position, &t)) {
                let yaw = heading(&cell.position, &t).unwrap_or(q0.yaw);
                return Some(UavGoal {
                    viewpoint: Viewpoint::at(cell.position, yaw),
                    cell: cell.key,
                    target,
                    cluster: cluster.block,
                    score,
                });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corridor::ugv_corridor;
    use crate::occupancy::OccupancyState;
    use crate::sensor::{AgentSpec, GroundTruthWorld};

    fn image(cells: &[(f64, f64, u32)]) -> ViewQualityImage {
        ViewQualityImage {
            cells: cells
                .iter()
                .enumerate()
                .map(|(i, &(x, y, _))| CorridorCell { key: VoxelKey::new(i as i32, 0, 0), position: Point::new(x, y, 0.75) })
                .collect(),
            ig: cells.iter().map(|c| c.2).collect(),
            kept: cells.iter().map(|c| c.2).collect(),
            n_r: 50,
            seed: 0,
        }
    }

    #[test]
    fn discount_example_prefers_the_near_cell() {
        // 10 e^-0.1 = 9.048 > 20 e^-0.8 = 8.987
        let img = image(&[(2.0, 0.0, 10), (16.0, 0.0, 20)]);
        let q0 = Viewpoint::new(0.0, 0.0, 0.75, 0.0);
        let g = select_ugv_goal(&img, &q0, 0.05, &HashSet::new()).unwrap();
        assert_eq!(g.key, VoxelKey::new(0, 0, 0));
        assert!((g.score - 10.0 * (-0.1f64).exp()).abs() < 1e-12);
        // no discount: pure argmax
        assert_eq!(select_ugv_goal(&img, &q0, 0.0, &HashSet::new()).unwrap().key, VoxelKey::new(1, 0, 0));
    }

    #[test]
    fn uniform_gain_picks_nearest_and_scaling_is_irrelevant() {
        let img = image(&[(5.0, 0.0, 4), (1.0, 1.0, 4), (-3.0, 0.0, 4)]);
        let q0 = Viewpoint::new(0.0, 0.0, 0.75, 0.0);
        let g = select_ugv_goal(&img, &q0, 0.05, &HashSet::new()).unwrap();
        assert_eq!(g.key, VoxelKey::new(1, 0, 0));
        assert!((g.viewpoint.yaw - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        let mut scaled = img.clone();
        scaled.ig.iter_mut().for_each(|v| *v *= 7);
        assert_eq!(select_ugv_goal(&scaled, &q0, 0.05, &HashSet::new()).unwrap().key, g.key);
        let all_zero = image(&[(1.0, 0.0, 0)]);
        assert!(select_ugv_goal(&all_zero, &q0, 0.05, &HashSet::new()).is_none());
    }

    #[test]
    fn two_light_sources_example() {
        // An occluder hides one of two frontiers from the second cell.
        let mut w = GroundTruthWorld::closed_box([30, 12, 8], 0.3).unwrap();
        w.fill(VoxelKey::new(20, 1, 1), VoxelKey::new(20, 4, 6), true);
        let mut map = w.to_known_map();
        let sources = [VoxelKey::new(24, 2, 2), VoxelKey::new(24, 8, 2)];
        for &s in &sources {
            map.set_state(s, OccupancyState::Unknown).unwrap();
        }
        let red = VoxelKey::new(22, 5, 2);
        let blue = VoxelKey::new(16, 2, 2);
        let cell = |key: VoxelKey| {
            let c = map.grid().center(key);
            CorridorCell { key, position: Point::new(c.x, c.y, 0.75) }
        };
        let corridor = Corridor { agent: AgentSpec::ugv(), cells: vec![cell(blue), cell(red)], cell_factor: 1, cell_size: 0.3 };
        let img = render_view_quality(&corridor, &sources, &map, 50, 3).unwrap();
        let ig_of = |k: VoxelKey| img.ig[img.cells.iter().position(|c| c.key == k).unwrap()];
        assert_eq!(ig_of(red), 2);
        assert_eq!(ig_of(blue), 1);
    }

    #[test]
    fn enclosed_cell_sees_nothing() {
        let mut w = GroundTruthWorld::closed_box([20, 20, 8], 0.3).unwrap();
        w.fill(VoxelKey::new(6, 6, 1), VoxelKey::new(13, 13, 6), true);
        w.fill(VoxelKey::new(7, 7, 1), VoxelKey::new(12, 12, 5), false);
        let mut map = w.to_known_map();
        map.set_state(VoxelKey::new(2, 2, 2), OccupancyState::Unknown).unwrap();
        let agent = AgentSpec::ugv();
        let corridor = ugv_corridor(&map, &agent, &Viewpoint::new(3.0, 3.0, 0.75, 0.0)).unwrap();
        assert!(!corridor.is_empty());
        let img = render_view_quality(&corridor, &[VoxelKey::new(2, 2, 2)], &map, 10, 0).unwrap();
        assert!(img.ig.iter().all(|&g| g == 0));
        assert!(img.kept.iter().all(|&k| k == 1));
        assert!(render_view_quality(&corridor, &[], &map, 10, 0).unwrap().ig.iter().all(|&g| g == 0));
        assert!(render_view_quality(&corridor, &[], &map, 0, 0).is_err());
    }

    #[test]
    fn rendering_is_deterministic_and_bounded() {
        let w = GroundTruthWorld::closed_box([24, 24, 8], 0.3).unwrap();
        let mut map = w.to_known_map();
        let frontiers: Vec<VoxelKey> = (1..23).map(|i| VoxelKey::new(i, 22, 2)).collect();
        for &f in &frontiers {
            map.set_state(f, OccupancyState::Unknown).unwrap();
        }
        let corridor = ugv_corridor(&map, &AgentSpec::ugv(), &Viewpoint::new(3.0, 3.0, 0.75, 0.0)).unwrap();
        let a = render_view_quality(&corridor, &frontiers, &map, 5, 11).unwrap();
        let b = render_view_quality(&corridor, &frontiers, &map, 5, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.ig.iter().zip(&a.kept).all(|(&ig, &k)| ig <= k && k <= 5));
    }

    #[test]
    fn clusters_partition_and_average() {
        let grid = GridSpec::from_dims(Point::origin(), 0.3, [32, 32, 16]).unwrap();
        let keys = [VoxelKey::new(1, 1, 1), VoxelKey::new(2, 1, 1), VoxelKey::new(9, 0, 0)];
        let clusters = cluster_frontiers(&grid, &keys, 8).unwrap();
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters.iter().map(|c| c.count()).sum::<usize>(), 3);
        assert!((clusters[0].center - Point::new(0.6, 0.45, 0.45)).norm() < 1e-12);
        assert!(cluster_frontiers(&grid, &keys, 1).is_err());
        assert!(cluster_frontiers(&grid, &keys, 6).is_err());
    }

    #[test]
    fn far_dense_cluster_beats_near_sparse_one() {
        // 30 e^-1 = 11.04 > 10 e^-0.1 = 9.05
        let near = 10.0 * (-0.05f64 * 2.0).exp();
        let far = 30.0 * (-0.05f64 * 20.0).exp();
        assert!(far > near);
        assert!((near - 9.048).abs() < 1e-3 && (far - 11.036).abs() < 1e-3);
    }

    #[test]
    fn uav_goal_faces_a_single_frontier() {
        let w = GroundTruthWorld::closed_box([40, 40, 20], 0.3).unwrap();
        let mut map = w.to_known_map();
        let target = VoxelKey::new(30, 20, 10);
        map.set_state(target, OccupancyState::Unknown).unwrap();
        let agent = AgentSpec::uav();
        let q0 = Viewpoint::new(3.0, 3.0, 3.0, 0.0);
        let corridor = crate::corridor::uav_corridor(&map, &agent, &q0).unwrap();
        let clusters = cluster_frontiers(map.grid(), &[target], 8).unwrap();
        let g = select_uav_goal(&clusters, &corridor, &map, &q0, 0.05, &Exclusions::default()).unwrap();
        let t = map.grid().center(target);
        assert_eq!(g.target, target);
        assert!(corridor.contains_key(&g.cell));
        assert!(nalgebra::distance(&g.viewpoint.position, &t) <= 10.0);
        assert!(map.line_of_sight(&g.viewpoint.position, &t));
        assert!(crate::geometry::relative_azimuth(&g.viewpoint.position, g.viewpoint.yaw, &t).abs() < 1e-12);
        let mut ex = Exclusions::default();
        ex.clusters.insert(g.cluster);
        assert!(select_uav_goal(&clusters, &corridor, &map, &q0, 0.05, &ex).is_none());
    }
}
