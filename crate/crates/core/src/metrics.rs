//! Per-step metrics, CSV export and the reachable-observable coverage target.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corridor::{ugv_corridor, uav_corridor};
use crate::error::Result;
use crate::geometry::Viewpoint;
use crate::occupancy::{OccupancyMap, OccupancyState};
use crate::sensor::{simulate_scan, AgentSpec, GroundTruthWorld};

/// Column order of the metrics CSV.
pub const METRICS_HEADER: [&str; 13] = [
    "step",
    "agent",
    "goal_x",
    "goal_y",
    "goal_z",
    "path_len_m",
    "ig_before",
    "ig_after",
    "plan_time_s",
    "cov_free",
    "cov_occ",
    "cov_unknown",
    "frontier_count",
];

/// One agent's share of one planning step. Goal fields are empty when the
/// agent had no goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub agent: String,
    pub goal_x: Option<f64>,
    pub goal_y: Option<f64>,
    pub goal_z: Option<f64>,
    pub path_len_m: f64,
    pub ig_before: usize,
    pub ig_after: usize,
    pub plan_time_s: f64,
    pub cov_free: f64,
    pub cov_occ: f64,
    pub cov_unknown: f64,
    pub frontier_count: usize,
}

pub fn export_metrics<W: Write>(records: &[StepRecord], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(METRICS_HEADER)?;
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<StepRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// One executed viewpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub step: usize,
    pub agent: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

pub fn export_paths<W: Write>(rows: &[PathRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record(["step", "agent", "x", "y", "z", "yaw"])?;
    }
    out.flush()?;
    Ok(())
}

/// Voxels a scan could touch from some pose of either agent's corridor in
/// the fully known world: the ground robot scanning from every corridor cell,
/// the drone from every corridor block facing four directions.
pub fn reachable_observable(
    world: &GroundTruthWorld,
    ugv: &AgentSpec,
    ugv_start: &Viewpoint,
    uav: &AgentSpec,
    uav_start: &Viewpoint,
) -> Result<Vec<bool>> {
    let known = world.to_known_map();
    let mut poses: Vec<(&AgentSpec, Viewpoint)> = Vec::new();
    for c in ugv_corridor(&known, ugv, ugv_start)?.cells {
        poses.push((ugv, Viewpoint::at(c.position, 0.0)));
    }
    for c in uav_corridor(&known, uav, uav_start)?.cells {
        for quarter in 0..4 {
            poses.push((uav, Viewpoint::at(c.position, quarter as f64 * std::f64::consts::FRAC_PI_2)));
        }
    }
    let grid = world.grid().clone();
    let n = grid.len();
    let mask = poses
        .par_iter()
        .fold(
            || vec![false; n],
            |mut seen, (agent, q)| {
                let origin = agent.sensor_origin(q);
                if let Ok(scan) = simulate_scan(world, &agent.sensor, &origin, q.yaw) {
                    for ray in scan {
                        for (k, _) in grid.traverse(&origin, &ray.endpoint) {
                            if let Some(i) = grid.index(k) {
                                seen[i] = true;
                            }
                        }
                    }
                }
                seen
            },
        )
        .reduce(
            || vec![false; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x |= y);
                a
            },
        );
    Ok(mask)
}

/// Fraction of the masked voxels that the map has observed.
pub fn masked_coverage(map: &OccupancyMap, mask: &[bool]) -> f64 {
    let total = mask.iter().filter(|&&m| m).count();
    if total == 0 {
        return 1.0;
    }
    let known = (0..map.grid().len())
        .filter(|&i| mask[i] && map.get(map.grid().key_of(i)) != Some(OccupancyState::Unknown))
        .count();
    known as f64 / total as f64
}
