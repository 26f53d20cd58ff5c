//! Frontier voxels: Unknown voxels with at least one Free face neighbour.

use std::collections::BTreeSet;

use crate::grid::VoxelKey;
use crate::occupancy::{ChangedVoxelSet, OccupancyMap, OccupancyState};

pub fn is_frontier(map: &OccupancyMap, key: VoxelKey) -> bool {
    map.get(key) == Some(OccupancyState::Unknown)
        && key.neighbors6().iter().any(|&n| map.is_free(n))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrontierSet {
    keys: BTreeSet<VoxelKey>,
}

impl FrontierSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Full scan of the map.
    pub fn batch(map: &OccupancyMap) -> Self {
        let grid = map.grid();
        let keys = (0..grid.len())
            .map(|i| grid.key_of(i))
            .filter(|&k| is_frontier(map, k))
            .collect();
        Self { keys }
    }

    /// Brings the set up to date after a map update that changed `changed`.
    ///
    /// Only the changed voxels and their face neighbours can change frontier
    /// status. Returns how many voxels were examined.
    pub fn update(&mut self, map: &OccupancyMap, changed: &ChangedVoxelSet) -> usize {
        let mut candidates: Vec<VoxelKey> = Vec::with_capacity(changed.len() * 7);
        for &k in changed.keys() {
            candidates.push(k);
            candidates.extend(k.neighbors6().into_iter().filter(|&n| map.grid().contains_key(n)));
        }
        candidates.sort_unstable();
        candidates.dedup();
        for &k in &candidates {
            if is_frontier(map, k) {
                self.keys.insert(k);
            } else {
                self.keys.remove(&k);
            }
        }
        candidates.len()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: &VoxelKey) -> bool {
        self.keys.contains(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VoxelKey> {
        self.keys.iter()
    }

    /// Keys in ascending order.
    pub fn to_vec(&self) -> Vec<VoxelKey> {
        self.keys.iter().copied().collect()
    }
}

impl FromIterator<VoxelKey> for FrontierSet {
    fn from_iter<I: IntoIterator<Item = VoxelKey>>(iter: I) -> Self {
        Self { keys: iter.into_iter().collect() }
    }
}
