//! Regular voxel lattice geometry and segment traversal.
//!
//! Both the ground-truth world and the occupancy map share a [`GridSpec`]:
//! an origin, an edge length and a voxel count per axis. Voxel `(i, j, k)`
//! covers `origin + [i, i+1) x [j, j+1) x [k, k+1) * resolution`.

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, Vector};

/// Integer voxel index at the base resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey {
    pub ix: i32,
    pub iy: i32,
    pub iz: i32,
}

impl VoxelKey {
    pub const fn new(ix: i32, iy: i32, iz: i32) -> Self {
        Self { ix, iy, iz }
    }

    pub fn offset(self, dx: i32, dy: i32, dz: i32) -> Self {
        Self::new(self.ix + dx, self.iy + dy, self.iz + dz)
    }

    /// Face-adjacent neighbours; some may lie outside any particular grid.
    pub fn neighbors6(self) -> [VoxelKey; 6] {
        [
            self.offset(-1, 0, 0),
            self.offset(1, 0, 0),
            self.offset(0, -1, 0),
            self.offset(0, 1, 0),
            self.offset(0, 0, -1),
            self.offset(0, 0, 1),
        ]
    }

    /// Index of the aligned `factor`-sized block containing this voxel.
    pub fn block(self, factor: u32) -> VoxelKey {
        let f = factor as i32;
        VoxelKey::new(self.ix.div_euclid(f), self.iy.div_euclid(f), self.iz.div_euclid(f))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    origin: Point,
    resolution: f64,
    dims: [usize; 3],
}

impl GridSpec {
    /// Grid covering `bounds`, with `ceil(extent / resolution)` voxels per axis.
    pub fn new(bounds: &Aabb, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidResolution(resolution));
        }
        let extent = bounds.extent();
        let mut dims = [0usize; 3];
        for axis in 0..3 {
            // Tolerate extents that are an exact multiple up to rounding.
            let cells = (extent[axis] / resolution - 1e-9).ceil();
            if !(extent[axis] >= resolution - 1e-9) || !cells.is_finite() {
                return Err(Error::DegenerateBounds);
            }
            dims[axis] = cells as usize;
        }
        Ok(Self { origin: bounds.min, resolution, dims })
    }

    pub fn from_dims(origin: Point, resolution: f64, dims: [usize; 3]) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidResolution(resolution));
        }
        if dims.iter().any(|&d| d == 0 || d > i32::MAX as usize) {
            return Err(Error::DegenerateBounds);
        }
        Ok(Self { origin, resolution, dims })
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The box actually covered by the voxels (may exceed the requested bounds).
    pub fn bounds(&self) -> Aabb {
        let ext = Vector::new(
            self.dims[0] as f64 * self.resolution,
            self.dims[1] as f64 * self.resolution,
            self.dims[2] as f64 * self.resolution,
        );
        Aabb::new(self.origin, self.origin + ext)
    }

    pub fn contains_key(&self, key: VoxelKey) -> bool {
        key.ix >= 0
            && key.iy >= 0
            && key.iz >= 0
            && (key.ix as usize) < self.dims[0]
            && (key.iy as usize) < self.dims[1]
            && (key.iz as usize) < self.dims[2]
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        self.bounds().contains(p)
    }

    /// Linear index, x fastest, then y, then z.
    pub fn index(&self, key: VoxelKey) -> Option<usize> {
        self.contains_key(key).then(|| {
            key.ix as usize + self.dims[0] * (key.iy as usize + self.dims[1] * key.iz as usize)
        })
    }

    pub fn key_of(&self, index: usize) -> VoxelKey {
        let nx = self.dims[0];
        let ny = self.dims[1];
        VoxelKey::new((index % nx) as i32, ((index / nx) % ny) as i32, (index / (nx * ny)) as i32)
    }

    /// Key of the voxel containing `p` (floor rule; may be out of bounds).
    pub fn key_at(&self, p: &Point) -> VoxelKey {
        let u = self.local(p);
        VoxelKey::new(u.x.floor() as i32, u.y.floor() as i32, u.z.floor() as i32)
    }

    pub fn center(&self, key: VoxelKey) -> Point {
        self.origin
            + Vector::new(
                (key.ix as f64 + 0.5) * self.resolution,
                (key.iy as f64 + 0.5) * self.resolution,
                (key.iz as f64 + 0.5) * self.resolution,
            )
    }

    /// Lower corner of a voxel.
    pub fn corner(&self, key: VoxelKey) -> Point {
        self.origin
            + Vector::new(
                key.ix as f64 * self.resolution,
                key.iy as f64 * self.resolution,
                key.iz as f64 * self.resolution,
            )
    }

    /// Center of the aligned block `block` of edge `factor` voxels.
    pub fn block_center(&self, block: VoxelKey, factor: u32) -> Point {
        let s = factor as f64 * self.resolution;
        self.origin
            + Vector::new(
                (block.ix as f64 + 0.5) * s,
                (block.iy as f64 + 0.5) * s,
                (block.iz as f64 + 0.5) * s,
            )
    }

    /// Position in voxel units relative to the origin.
    fn local(&self, p: &Point) -> Vector {
        (p - self.origin) / self.resolution
    }

    /// All keys of the voxels whose interiors overlap the box `[lo, hi]`.
    /// Out-of-grid keys are included so callers can decide how to treat them.
    pub fn keys_overlapping(&self, lo: &Point, hi: &Point) -> impl Iterator<Item = VoxelKey> {
        let a = self.local(lo);
        let b = self.local(hi);
        let first = [a.x.floor() as i32, a.y.floor() as i32, a.z.floor() as i32];
        let last = [
            b.x.ceil() as i32 - 1,
            b.y.ceil() as i32 - 1,
            b.z.ceil() as i32 - 1,
        ];
        (first[2]..=last[2]).flat_map(move |iz| {
            (first[1]..=last[1])
                .flat_map(move |iy| (first[0]..=last[0]).map(move |ix| VoxelKey::new(ix, iy, iz)))
        })
    }

    /// Walks the voxels pierced by the segment `from -> to`.
    pub fn traverse(&self, from: &Point, to: &Point) -> SegmentTraversal {
        SegmentTraversal::new(self, from, to)
    }
}

/// Parametric ties closer than this are stepped together, so a segment
/// passing exactly through a voxel edge or corner does not visit the voxels
/// it only touches.
const TIE_EPS: f64 = 1e-10;

/// Voxel walk along a segment (Amanatides-Woo stepping).
///
/// Yields `(key, t_enter)` where `t_enter` in `[0, 1]` is the segment
/// parameter at which the walk entered the voxel. The first voxel is the one
/// the segment leaves `from` into; the walk ends at the voxel the segment
/// reaches `to` from, or when it leaves the grid.
#[derive(Debug, Clone)]
pub struct SegmentTraversal {
    current: [i32; 3],
    end: [i32; 3],
    step: [i32; 3],
    t_max: [f64; 3],
    t_delta: [f64; 3],
    t_enter: f64,
    dims: [usize; 3],
    done: bool,
}

impl SegmentTraversal {
    fn new(grid: &GridSpec, from: &Point, to: &Point) -> Self {
        let a = grid.local(from);
        let b = grid.local(to);
        let d = b - a;
        let mut current = [0i32; 3];
        let mut end = [0i32; 3];
        let mut step = [0i32; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for axis in 0..3 {
            let (ua, ub, du) = (a[axis], b[axis], d[axis]);
            if du > 0.0 {
                current[axis] = ua.floor() as i32;
                end[axis] = ub.ceil() as i32 - 1;
                step[axis] = 1;
                t_max[axis] = ((current[axis] + 1) as f64 - ua) / du;
                t_delta[axis] = 1.0 / du;
            } else if du < 0.0 {
                current[axis] = ua.ceil() as i32 - 1;
                end[axis] = ub.floor() as i32;
                step[axis] = -1;
                t_max[axis] = (current[axis] as f64 - ua) / du;
                t_delta[axis] = -1.0 / du;
            } else {
                current[axis] = ua.floor() as i32;
                end[axis] = current[axis];
            }
        }
        Self {
            current,
            end,
            step,
            t_max,
            t_delta,
            t_enter: 0.0,
            dims: grid.dims,
            done: false,
        }
    }

    fn in_grid(&self) -> bool {
        (0..3).all(|i| self.current[i] >= 0 && (self.current[i] as usize) < self.dims[i])
    }

    /// Key of the voxel the segment ends in.
    pub fn end_key(&self) -> VoxelKey {
        VoxelKey::new(self.end[0], self.end[1], self.end[2])
    }
}

impl Iterator for SegmentTraversal {
    type Item = (VoxelKey, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done || !self.in_grid() {
            self.done = true;
            return None;
        }
        let key = VoxelKey::new(self.current[0], self.current[1], self.current[2]);
        let t_enter = self.t_enter;
        if self.current == self.end {
            self.done = true;
            return Some((key, t_enter));
        }
        let t_next = self.t_max[0].min(self.t_max[1]).min(self.t_max[2]);
        if t_next > 1.0 + TIE_EPS {
            // Rounding left us short of the end voxel.
            self.done = true;
            return Some((key, t_enter));
        }
        for axis in 0..3 {
            if self.t_max[axis] <= t_next + TIE_EPS {
                self.current[axis] += self.step[axis];
                self.t_max[axis] += self.t_delta[axis];
            }
        }
        self.t_enter = t_next;
        Some((key, t_enter))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::from_dims(Point::origin(), 1.0, [n, n, n]).unwrap()
    }

    fn keys(g: &GridSpec, a: [f64; 3], b: [f64; 3]) -> Vec<VoxelKey> {
        g.traverse(&Point::from(a), &Point::from(b)).map(|(k, _)| k).collect()
    }

    #[test]
    fn dims_round_up() {
        let g = GridSpec::new(&Aabb::from_extent(Vector::new(9.6, 9.6, 3.0)), 0.3).unwrap();
        assert_eq!(g.dims(), [32, 32, 10]);
        let g = GridSpec::new(&Aabb::from_extent(Vector::new(1.0, 1.0, 1.1)), 0.5).unwrap();
        assert_eq!(g.dims(), [2, 2, 3]);
    }

    #[test]
    fn rejects_bad_resolution_and_bounds() {
        let b = Aabb::from_extent(Vector::new(1.0, 1.0, 1.0));
        assert!(matches!(GridSpec::new(&b, 0.0), Err(Error::InvalidResolution(_))));
        assert!(matches!(GridSpec::new(&b, -1.0), Err(Error::InvalidResolution(_))));
        assert!(matches!(GridSpec::new(&b, 2.0), Err(Error::DegenerateBounds)));
    }

    #[test]
    fn index_round_trip() {
        let g = GridSpec::from_dims(Point::origin(), 0.5, [3, 4, 5]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index(g.key_of(i)), Some(i));
        }
        assert_eq!(g.index(VoxelKey::new(3, 0, 0)), None);
    }

    #[test]
    fn axis_aligned_walk() {
        let g = grid(8);
        let k = keys(&g, [0.5, 0.5, 0.5], [4.5, 0.5, 0.5]);
        assert_eq!(k.len(), 5);
        assert_eq!(k[4], VoxelKey::new(4, 0, 0));
    }

    #[test]
    fn exact_diagonal_skips_touched_voxels() {
        let g = grid(8);
        let k = keys(&g, [0.5, 0.5, 0.5], [2.5, 2.5, 0.5]);
        assert_eq!(
            k,
            vec![VoxelKey::new(0, 0, 0), VoxelKey::new(1, 1, 0), VoxelKey::new(2, 2, 0)]
        );
    }

    #[test]
    fn start_on_corner_enters_along_direction() {
        let g = grid(8);
        let k = keys(&g, [2.0, 2.0, 2.0], [0.5, 0.7, 0.6]);
        assert_eq!(k[0], VoxelKey::new(1, 1, 1));
        assert_eq!(*k.last().unwrap(), VoxelKey::new(0, 0, 0));
    }

    #[test]
    fn walk_stops_at_grid_exit() {
        let g = grid(4);
        let k = keys(&g, [1.5, 1.5, 1.5], [10.0, 1.5, 1.5]);
        assert_eq!(k.len(), 3);
    }

    #[test]
    fn enter_parameters_increase() {
        let g = grid(16);
        let ts: Vec<f64> = g
            .traverse(&Point::new(0.3, 0.7, 0.2), &Point::new(13.1, 9.4, 5.5))
            .map(|(_, t)| t)
            .collect();
        assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        assert!(ts.iter().all(|t| (0.0..=1.0).contains(t)));
    }
}
