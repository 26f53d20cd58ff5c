//! Bounded log-odds voxel occupancy map.
//!
//! ```text
//! l(v) <- clamp(l(v) + l_miss)   for voxels a ray passes through
//! l(v) <- clamp(l(v) + l_hit)    for the voxel a ray terminates in
//! state(v) = Unknown             if v was never updated
//!          = Occupied            if l(v) > threshold
//!          = Free                otherwise
//! ```
//!
//! Within one scan every voxel receives at most one miss and at most one hit,
//! misses first, so the result does not depend on ray order.

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, Vector};
use crate::grid::{GridSpec, VoxelKey};
use crate::voxw;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OccupancyState {
    Free,
    Occupied,
    Unknown,
}

impl OccupancyState {
    /// Byte used by the tri-state map export.
    pub fn to_byte(self) -> u8 {
        match self {
            OccupancyState::Free => 0,
            OccupancyState::Occupied => 1,
            OccupancyState::Unknown => 2,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(OccupancyState::Free),
            1 => Some(OccupancyState::Occupied),
            2 => Some(OccupancyState::Unknown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogOddsParams {
    pub hit: f64,
    pub miss: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
    pub occupied_threshold: f64,
}

impl Default for LogOddsParams {
    fn default() -> Self {
        Self {
            hit: 0.85,
            miss: -0.4,
            clamp_min: -3.5,
            clamp_max: 3.5,
            occupied_threshold: 0.0,
        }
    }
}

/// One range measurement: where the ray ended and whether it hit something.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeReturn {
    pub endpoint: Point,
    pub hit: bool,
}

/// Voxels whose tri-state classification changed, sorted and unique.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChangedVoxelSet(Vec<VoxelKey>);

impl ChangedVoxelSet {
    pub fn keys(&self) -> &[VoxelKey] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, key: &VoxelKey) -> bool {
        self.0.binary_search(key).is_ok()
    }

    pub fn extend(&mut self, other: ChangedVoxelSet) {
        self.0.extend(other.0);
        self.0.sort_unstable();
        self.0.dedup();
    }
}

/// Fractions of the map in each state; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageStats {
    pub free: f64,
    pub occupied: f64,
    pub unknown: f64,
}

#[derive(Debug, Clone)]
pub struct OccupancyMap {
    grid: GridSpec,
    params: LogOddsParams,
    log_odds: Vec<f64>,
    observed: Vec<bool>,
}

impl OccupancyMap {
    pub fn new(bounds: Aabb, resolution: f64) -> Result<Self> {
        Self::with_params(bounds, resolution, LogOddsParams::default())
    }

    pub fn with_params(bounds: Aabb, resolution: f64, params: LogOddsParams) -> Result<Self> {
        Ok(Self::from_grid(GridSpec::new(&bounds, resolution)?, params))
    }

    pub fn from_grid(grid: GridSpec, params: LogOddsParams) -> Self {
        let n = grid.len();
        Self { grid, params, log_odds: vec![0.0; n], observed: vec![false; n] }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn resolution(&self) -> f64 {
        self.grid.resolution()
    }

    pub fn bounds(&self) -> Aabb {
        self.grid.bounds()
    }

    pub fn params(&self) -> &LogOddsParams {
        &self.params
    }

    fn state_at(&self, idx: usize) -> OccupancyState {
        if !self.observed[idx] {
            OccupancyState::Unknown
        } else if self.log_odds[idx] > self.params.occupied_threshold {
            OccupancyState::Occupied
        } else {
            OccupancyState::Free
        }
    }

    pub fn state(&self, key: VoxelKey) -> Result<OccupancyState> {
        self.grid.index(key).map(|i| self.state_at(i)).ok_or(Error::KeyOutOfBounds(key))
    }

    /// State of an arbitrary key; `None` outside the map.
    pub fn get(&self, key: VoxelKey) -> Option<OccupancyState> {
        self.grid.index(key).map(|i| self.state_at(i))
    }

    pub fn is_free(&self, key: VoxelKey) -> bool {
        self.get(key) == Some(OccupancyState::Free)
    }

    pub fn log_odds(&self, key: VoxelKey) -> Option<f64> {
        self.grid.index(key).filter(|&i| self.observed[i]).map(|i| self.log_odds[i])
    }

    /// Overwrites one voxel. Used to load exported maps and to build test scenes.
    pub fn set_state(&mut self, key: VoxelKey, state: OccupancyState) -> Result<()> {
        let idx = self.grid.index(key).ok_or(Error::KeyOutOfBounds(key))?;
        match state {
            OccupancyState::Unknown => {
                self.observed[idx] = false;
                self.log_odds[idx] = 0.0;
            }
            OccupancyState::Free => {
                self.observed[idx] = true;
                self.log_odds[idx] = self.params.clamp_min;
            }
            OccupancyState::Occupied => {
                self.observed[idx] = true;
                self.log_odds[idx] = self.params.clamp_max;
            }
        }
        Ok(())
    }

    fn apply(&mut self, idx: usize, delta: f64) {
        let p = &self.params;
        self.log_odds[idx] = (self.log_odds[idx] + delta).clamp(p.clamp_min, p.clamp_max);
        self.observed[idx] = true;
    }

    /// Applies miss updates to `misses` then hit updates to `hits` (linear
    /// indices, each list sorted and unique) and reports the changed voxels.
    fn apply_batch(&mut self, misses: &[usize], hits: &[usize]) -> ChangedVoxelSet {
        let mut touched: Vec<usize> = misses.iter().chain(hits).copied().collect();
        touched.sort_unstable();
        touched.dedup();
        let before: Vec<OccupancyState> = touched.iter().map(|&i| self.state_at(i)).collect();
        for &i in misses {
            self.apply(i, self.params.miss);
        }
        for &i in hits {
            self.apply(i, self.params.hit);
        }
        let mut changed: Vec<VoxelKey> = touched
            .iter()
            .zip(before)
            .filter(|(&i, old)| self.state_at(i) != *old)
            .map(|(&i, _)| self.grid.key_of(i))
            .collect();
        changed.sort_unstable();
        ChangedVoxelSet(changed)
    }

    /// Integrates one scan taken from `origin`.
    ///
    /// Rays leaving the map are clipped at the boundary; their endpoints get no
    /// hit update.
    pub fn integrate_scan(&mut self, origin: &Point, scan: &[RangeReturn]) -> Result<ChangedVoxelSet> {
        if !self.grid.contains_point(origin) {
            return Err(Error::point_out_of_bounds(origin));
        }
        let mut misses = Vec::new();
        let mut hits = Vec::new();
        for ray in scan {
            let walk = self.grid.traverse(origin, &ray.endpoint);
            let end = walk.end_key();
            let start = misses.len();
            misses.extend(walk.map(|(k, _)| k));
            if ray.hit && misses.last() == Some(&end) && misses.len() > start {
                hits.push(end);
                misses.pop();
            }
        }
        let mut misses: Vec<usize> = misses.into_iter().filter_map(|k| self.grid.index(k)).collect();
        let mut hits: Vec<usize> = hits.into_iter().filter_map(|k| self.grid.index(k)).collect();
        misses.sort_unstable();
        misses.dedup();
        hits.sort_unstable();
        hits.dedup();
        Ok(self.apply_batch(&misses, &hits))
    }

    /// Marks the voxels overlapping an axis-aligned box as observed free (one
    /// miss update each). Voxels outside the map are ignored.
    pub fn clear_box(&mut self, center: &Point, half_extents: &Vector) -> ChangedVoxelSet {
        let lo = center - half_extents;
        let hi = center + half_extents;
        let mut misses: Vec<usize> = self
            .grid
            .keys_overlapping(&lo, &hi)
            .filter_map(|k| self.grid.index(k))
            .collect();
        misses.sort_unstable();
        misses.dedup();
        self.apply_batch(&misses, &[])
    }

    /// Line-of-sight test: true iff every voxel pierced by the segment,
    /// other than the two voxels holding its endpoints, is Free.
    pub fn ray_cast(&self, from: &Point, to: &Point) -> Result<bool> {
        for p in [from, to] {
            if !self.grid.contains_point(p) {
                return Err(Error::point_out_of_bounds(p));
            }
        }
        Ok(self.line_of_sight(from, to))
    }

    /// [`OccupancyMap::ray_cast`] without the bounds check; voxels outside the
    /// map block.
    pub fn line_of_sight(&self, from: &Point, to: &Point) -> bool {
        // Endpoints on a voxel boundary belong to both the floor voxel and
        // the voxel the segment actually enters; neither blocks.
        let start_floor = self.grid.key_at(from);
        let end_floor = self.grid.key_at(to);
        let mut walk = self.grid.traverse(from, to);
        let end = walk.end_key();
        let Some((start, _)) = walk.next() else {
            return false;
        };
        let mut last = start;
        for (key, _) in walk {
            last = key;
            if key == start || key == start_floor || key == end || key == end_floor {
                continue;
            }
            match self.grid.index(key) {
                Some(i) if self.state_at(i) == OccupancyState::Free => {}
                _ => return false,
            }
        }
        // A walk that stops before the end voxel left the grid.
        last == end
    }

    /// Aligned `factor^3` blocks whose every base voxel is Free. Returned keys
    /// are block indices, sorted. Blocks crossing the map boundary are never
    /// free.
    pub fn coarse_free_voxels(&self, factor: u32) -> Result<Vec<VoxelKey>> {
        if factor == 0 || !factor.is_power_of_two() {
            return Err(Error::InvalidFactor { factor, min: 1 });
        }
        let f = factor as usize;
        let [nx, ny, nz] = self.grid.dims();
        let (bx, by, bz) = (nx / f, ny / f, nz / f);
        let mut out = Vec::new();
        for kz in 0..bz {
            for ky in 0..by {
                'block: for kx in 0..bx {
                    for z in kz * f..(kz + 1) * f {
                        for y in ky * f..(ky + 1) * f {
                            let row = nx * (y + ny * z);
                            for x in kx * f..(kx + 1) * f {
                                if self.state_at(row + x) != OccupancyState::Free {
                                    continue 'block;
                                }
                            }
                        }
                    }
                    out.push(VoxelKey::new(kx as i32, ky as i32, kz as i32));
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let (mut free, mut occ, mut unk) = (0, 0, 0);
        for i in 0..self.grid.len() {
            match self.state_at(i) {
                OccupancyState::Free => free += 1,
                OccupancyState::Occupied => occ += 1,
                OccupancyState::Unknown => unk += 1,
            }
        }
        (free, occ, unk)
    }

    pub fn coverage_stats(&self) -> CoverageStats {
        let (free, occ, unk) = self.counts();
        let n = self.grid.len() as f64;
        CoverageStats { free: free as f64 / n, occupied: occ as f64 / n, unknown: unk as f64 / n }
    }

    /// Tri-state bytes in export order (x fastest).
    pub fn to_tristate(&self) -> Vec<u8> {
        (0..self.grid.len()).map(|i| self.state_at(i).to_byte()).collect()
    }

    pub fn write_voxw<W: std::io::Write>(&self, w: W) -> Result<()> {
        voxw::write(w, self.grid.dims(), self.resolution() as f32, &self.to_tristate())
    }

    /// Loads a tri-state export. Known voxels get clamped log-odds.
    pub fn read_voxw<R: std::io::Read>(r: R) -> Result<Self> {
        let raw = voxw::read(r)?;
        let grid = GridSpec::from_dims(Point::origin(), raw.resolution as f64, raw.dims)?;
        let mut map = Self::from_grid(grid, LogOddsParams::default());
        for (i, &b) in raw.data.iter().enumerate() {
            let state = OccupancyState::from_byte(b)
                .ok_or_else(|| Error::Format(format!("invalid tri-state byte {b}")))?;
            let key = map.grid.key_of(i);
            map.set_state(key, state)?;
        }
        Ok(map)
    }
}
