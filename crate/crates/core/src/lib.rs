//! Collaborative ground-aerial exploration of voxelized 3D worlds.
//!
//! The pipeline per planning step: distribute frontiers between a ground
//! robot and a drone, choose goals (Monte-Carlo view quality for the ground
//! robot, frontier clusters for the drone), plan RRT paths, optimize the
//! drone's yaw along its path, then simulate scans along both paths.

pub mod corridor;
pub mod error;
pub mod frontier;
pub mod geometry;
pub mod goal;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod occupancy;
pub mod optimizer;
pub mod planner;
pub mod seed;
pub mod sensor;
pub mod voxw;
pub mod worlds;

pub use corridor::{Corridor, FrontierDistribution};
pub use error::{Error, Result};
pub use frontier::FrontierSet;
pub use geometry::{Aabb, Point, Vector, Viewpoint};
pub use grid::{GridSpec, VoxelKey};
pub use occupancy::{ChangedVoxelSet, CoverageStats, OccupancyMap, OccupancyState, RangeReturn};
pub use planner::Path;
pub use sensor::{AgentSpec, GroundTruthWorld, Motion, SensorKind, SensorModel};
