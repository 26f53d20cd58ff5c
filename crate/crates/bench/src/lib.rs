//! Fixtures shared by the pipeline benchmarks.

use coexplore::harness::{AgentRole, ExplorationConfig, Explorer, Team};
use coexplore::worlds::generate_maze;
use coexplore::{FrontierSet, GroundTruthWorld, OccupancyMap, Viewpoint};

/// A maze world and the state of a team exploration after a few steps.
pub struct Snapshot {
    pub world: GroundTruthWorld,
    pub map: OccupancyMap,
    pub frontiers: FrontierSet,
    pub ugv: Viewpoint,
    pub uav: Viewpoint,
    pub config: ExplorationConfig,
}

pub fn maze_snapshot(seed: u64, steps: usize) -> Snapshot {
    let world = generate_maze(seed, 8, 8, 2.1, 0.3).expect("valid maze parameters").world;
    let config = ExplorationConfig { seed, ..Default::default() };
    let (map, frontiers, ugv, uav) = {
        let mut ex = Explorer::new(&world, config.clone(), Team::Both).expect("maze has start poses");
        for _ in 0..steps {
            if ex.step().expect("step succeeds").is_some() {
                break;
            }
        }
        (ex.map().clone(), ex.frontiers().clone(), ex.pose(AgentRole::Ugv), ex.pose(AgentRole::Uav))
    };
    Snapshot { world, map, frontiers, ugv, uav, config }
}
