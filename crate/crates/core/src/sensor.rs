//! Ground-truth worlds, range sensors and agent descriptions.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::geometry::{elevation, relative_azimuth, Point, Vector, Viewpoint};
use crate::grid::{GridSpec, VoxelKey};
use crate::occupancy::{LogOddsParams, OccupancyMap, OccupancyState, RangeReturn};
use crate::voxw;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorKind {
    FrustumCamera,
    Lidar360,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub kind: SensorKind,
    pub d_max: f64,
    /// Horizontal field of view (radians); `2*pi` for a lidar.
    pub fov_h: f64,
    /// Vertical field of view (radians), symmetric about the horizon.
    pub fov_v: f64,
    pub rays_h: usize,
    pub rays_v: usize,
}

impl SensorModel {
    pub fn camera(d_max: f64, fov_h: f64, fov_v: f64) -> Self {
        Self { kind: SensorKind::FrustumCamera, d_max, fov_h, fov_v, rays_h: 64, rays_v: 48 }
    }

    pub fn lidar(d_max: f64, fov_v: f64) -> Self {
        Self { kind: SensorKind::Lidar360, d_max, fov_h: TAU, fov_v, rays_h: 360, rays_v: 16 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("sensor: {m}")));
        if !(self.d_max > 0.0) {
            return bad("d_max must be positive");
        }
        if !(self.fov_v > 0.0 && self.fov_v <= PI) {
            return bad("vertical field of view must be in (0, pi]");
        }
        match self.kind {
            SensorKind::FrustumCamera if !(self.fov_h > 0.0 && self.fov_h <= PI) => {
                return bad("camera horizontal field of view must be in (0, pi]")
            }
            SensorKind::Lidar360 if (self.fov_h - TAU).abs() > 1e-12 => {
                return bad("lidar horizontal field of view must be 2*pi")
            }
            _ => {}
        }
        if self.rays_h == 0 || self.rays_v == 0 {
            return bad("ray counts must be positive");
        }
        Ok(())
    }

    pub fn is_omnidirectional(&self) -> bool {
        self.kind == SensorKind::Lidar360
    }

    /// Whether `target` is inside range and the yaw-rotated field of view
    /// (occlusion not considered).
    pub fn covers(&self, origin: &Point, yaw: f64, target: &Point) -> bool {
        if nalgebra::distance_squared(origin, target) > self.d_max * self.d_max {
            return false;
        }
        if elevation(origin, target).abs() > self.fov_v / 2.0 {
            return false;
        }
        self.is_omnidirectional() || relative_azimuth(origin, yaw, target).abs() <= self.fov_h / 2.0
    }

    /// Unit ray directions in the sensor frame (yaw = 0).
    pub fn ray_directions(&self) -> Vec<Vector> {
        let spread = |n: usize, fov: f64, closed: bool| -> Vec<f64> {
            if n == 1 {
                return vec![0.0];
            }
            let steps = if closed { n - 1 } else { n } as f64;
            (0..n).map(|i| -fov / 2.0 + fov * i as f64 / steps).collect()
        };
        let azimuths = spread(self.rays_h, self.fov_h, !self.is_omnidirectional());
        let elevations = spread(self.rays_v, self.fov_v, true);
        let mut dirs = Vec::with_capacity(azimuths.len() * elevations.len());
        for &el in &elevations {
            for &az in &azimuths {
                dirs.push(Vector::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()));
            }
        }
        dirs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Ground,
    Aerial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub name: String,
    pub motion: Motion,
    pub sensor: SensorModel,
    /// Half extents of the axis-aligned collision box.
    pub half_extents: Vector,
    /// Height of the sensor above the map origin; the plane a ground agent moves in.
    pub sensor_height: f64,
}

impl AgentSpec {
    /// Lidar ground robot: 6 m range, +-20 deg vertical, 1.0 x 1.0 x 0.7 m body.
    pub fn ugv() -> Self {
        Self {
            name: "ugv".into(),
            motion: Motion::Ground,
            sensor: SensorModel::lidar(6.0, 40f64.to_radians()),
            half_extents: Vector::new(0.5, 0.5, 0.35),
            sensor_height: 0.75,
        }
    }

    /// Depth-camera quadrotor: 10 m range, pi/2 x 2pi/5 field of view, 0.8 m cube body.
    pub fn uav() -> Self {
        Self {
            name: "uav".into(),
            motion: Motion::Aerial,
            sensor: SensorModel::camera(10.0, PI / 2.0, 2.0 * PI / 5.0),
            half_extents: Vector::new(0.4, 0.4, 0.4),
            sensor_height: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        if self.half_extents.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::InvalidParameter(format!("{}: collision extents must be positive", self.name)));
        }
        Ok(())
    }

    /// Largest edge of the collision box.
    pub fn collision_edge(&self) -> f64 {
        2.0 * self.half_extents.max()
    }

    /// Where the sensor sits for a configuration.
    pub fn sensor_origin(&self, q: &Viewpoint) -> Point {
        match self.motion {
            Motion::Ground => Point::new(q.position.x, q.position.y, self.sensor_height),
            Motion::Aerial => q.position,
        }
    }
}

/// Immutable voxel world the sensors observe.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthWorld {
    grid: GridSpec,
    occupied: Vec<bool>,
}

impl GroundTruthWorld {
    /// Empty world with an occupied boundary shell.
    pub fn closed_box(dims: [usize; 3], resolution: f64) -> Result<Self> {
        let grid = GridSpec::from_dims(Point::origin(), resolution, dims)?;
        let mut world = Self { occupied: vec![false; grid.len()], grid };
        world.seal();
        Ok(world)
    }

    pub fn from_occupancy(grid: GridSpec, occupied: Vec<bool>) -> Result<Self> {
        if occupied.len() != grid.len() {
            return Err(Error::InvalidParameter("occupancy length does not match grid".into()));
        }
        Ok(Self { grid, occupied })
    }

    pub(crate) fn seal(&mut self) {
        let [nx, ny, nz] = self.grid.dims();
        for i in 0..self.grid.len() {
            let k = self.grid.key_of(i);
            let (x, y, z) = (k.ix as usize, k.iy as usize, k.iz as usize);
            if x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1 {
                self.occupied[i] = true;
            }
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn resolution(&self) -> f64 {
        self.grid.resolution()
    }

    /// Out-of-bounds keys count as occupied.
    pub fn is_occupied(&self, key: VoxelKey) -> bool {
        self.grid.index(key).map_or(true, |i| self.occupied[i])
    }

    pub fn set_occupied(&mut self, key: VoxelKey, occupied: bool) {
        if let Some(i) = self.grid.index(key) {
            self.occupied[i] = occupied;
        }
    }

    /// Fills the inclusive voxel box `[lo, hi]`.
    pub fn fill(&mut self, lo: VoxelKey, hi: VoxelKey, occupied: bool) {
        for iz in lo.iz..=hi.iz {
            for iy in lo.iy..=hi.iy {
                for ix in lo.ix..=hi.ix {
                    self.set_occupied(VoxelKey::new(ix, iy, iz), occupied);
                }
            }
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    /// A fully observed map of this world.
    pub fn to_known_map(&self) -> OccupancyMap {
        let mut map = OccupancyMap::from_grid(self.grid.clone(), LogOddsParams::default());
        for (i, &occ) in self.occupied.iter().enumerate() {
            let state = if occ { OccupancyState::Occupied } else { OccupancyState::Free };
            map.set_state(self.grid.key_of(i), state).expect("key from own grid");
        }
        map
    }

    pub fn write_voxw<W: std::io::Write>(&self, w: W) -> Result<()> {
        let bytes: Vec<u8> = self.occupied.iter().map(|&o| o as u8).collect();
        voxw::write(w, self.grid.dims(), self.resolution() as f32, &bytes)
    }

    pub fn read_voxw<R: std::io::Read>(r: R) -> Result<Self> {
        let raw = voxw::read(r)?;
        let grid = GridSpec::from_dims(Point::origin(), raw.resolution as f64, raw.dims)?;
        let occupied = raw
            .data
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Format(format!("ground-truth byte must be 0 or 1, got {b}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, occupied })
    }

    /// Casts one ray; returns the first occupied-voxel boundary point within
    /// `max_range` or the point at `max_range`.
    pub fn cast(&self, origin: &Point, dir: &Vector, max_range: f64) -> RangeReturn {
        let far = origin + dir * max_range;
        for (key, t) in self.grid.traverse(origin, &far) {
            if self.is_occupied(key) {
                // Pull the entry point just inside the voxel so the hit lands
                // on it regardless of rounding.
                let rho = self.resolution();
                let lo = self.grid.corner(key);
                let margin = 1e-9 * rho.max(1.0);
                let p = origin + (far - origin) * t;
                let endpoint = Point::new(
                    p.x.clamp(lo.x + margin, lo.x + rho - margin),
                    p.y.clamp(lo.y + margin, lo.y + rho - margin),
                    p.z.clamp(lo.z + margin, lo.z + rho - margin),
                );
                return RangeReturn { endpoint, hit: true };
            }
        }
        RangeReturn { endpoint: far, hit: false }
    }
}

/// Simulates one noise-free scan from `origin`, rotated by `yaw`.
pub fn simulate_scan(
    world: &GroundTruthWorld,
    sensor: &SensorModel,
    origin: &Point,
    yaw: f64,
) -> Result<Vec<RangeReturn>> {
    if world.is_occupied(world.grid().key_at(origin)) {
        return Err(Error::PoseInObstacle);
    }
    let (s, c) = yaw.sin_cos();
    Ok(sensor
        .ray_directions()
        .iter()
        .map(|d| {
            let rotated = Vector::new(c * d.x - s * d.y, s * d.x + c * d.y, d.z);
            world.cast(origin, &rotated, sensor.d_max)
        })
        .collect())
}

/// Scan taken by `agent` at configuration `q`.
pub fn simulate_agent_scan(world: &GroundTruthWorld, agent: &AgentSpec, q: &Viewpoint) -> Result<Vec<RangeReturn>> {
    simulate_scan(world, &agent.sensor, &agent.sensor_origin(q), q.yaw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;

    #[test]
    fn default_agents_are_valid() {
        AgentSpec::ugv().validate().unwrap();
        AgentSpec::uav().validate().unwrap();
        let mut bad = SensorModel::camera(10.0, 4.0, 1.0);
        assert!(bad.validate().is_err());
        bad.fov_h = 1.0;
        bad.d_max = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ray_counts_and_spread() {
        let cam = SensorModel::camera(10.0, PI / 2.0, 2.0 * PI / 5.0);
        let dirs = cam.ray_directions();
        assert_eq!(dirs.len(), 64 * 48);
        let max_az = dirs.iter().map(|d| d.y.atan2(d.x).abs()).fold(0.0, f64::max);
        assert!((max_az - PI / 4.0).abs() < 1e-9);
        let lidar = SensorModel::lidar(6.0, 40f64.to_radians());
        assert_eq!(lidar.ray_directions().len(), 360 * 16);
    }

    #[test]
    fn rays_inside_an_empty_interior_reach_max_range() {
        let world = GroundTruthWorld::closed_box([100, 100, 100], 0.3).unwrap();
        let origin = Point::new(15.0, 15.0, 15.0);
        let scan = simulate_scan(&world, &SensorModel::camera(5.0, 1.0, 1.0), &origin, 0.3).unwrap();
        assert!(scan.iter().all(|r| !r.hit && (nalgebra::distance(&r.endpoint, &origin) - 5.0).abs() < 1e-9));
    }

    #[test]
    fn wall_ahead_is_hit_at_its_distance() {
        let mut world = GroundTruthWorld::closed_box([40, 20, 20], 0.3).unwrap();
        let origin = Point::new(3.0 + 0.15, 3.0, 3.0);
        // wall plane at x = 5.1 m (voxel 17)
        world.fill(VoxelKey::new(17, 0, 0), VoxelKey::new(17, 19, 19), true);
        let mut cam = SensorModel::camera(10.0, 1.0, 1.0);
        cam.rays_h = 1;
        cam.rays_v = 1;
        let scan = simulate_scan(&world, &cam, &origin, 0.0).unwrap();
        assert!(scan[0].hit);
        assert!((nalgebra::distance(&scan[0].endpoint, &origin) - 1.95).abs() < 0.3);
        assert_eq!(world.grid().key_at(&scan[0].endpoint), VoxelKey::new(17, 10, 10));
    }

    #[test]
    fn pose_inside_obstacle_is_rejected() {
        let world = GroundTruthWorld::closed_box([10, 10, 10], 1.0).unwrap();
        let r = simulate_scan(&world, &SensorModel::lidar(5.0, 0.5), &Point::new(0.5, 5.0, 5.0), 0.0);
        assert!(matches!(r, Err(Error::PoseInObstacle)));
    }

    #[test]
    fn lidar_range_multiset_is_yaw_invariant_in_a_symmetric_room() {
        let world = GroundTruthWorld::closed_box([21, 21, 11], 0.3).unwrap();
        let c = world.grid().center(VoxelKey::new(10, 10, 5));
        let lidar = SensorModel { rays_h: 36, rays_v: 5, ..SensorModel::lidar(6.0, 0.6) };
        let ranges = |yaw: f64| {
            let mut r: Vec<i64> = simulate_scan(&world, &lidar, &c, yaw)
                .unwrap()
                .iter()
                .map(|r| (nalgebra::distance(&r.endpoint, &c) * 1e6).round() as i64)
                .collect();
            r.sort_unstable();
            r
        };
        let a = ranges(0.0);
        let b = ranges(PI / 2.0);
        // quarter-turn symmetry is exact up to floating rounding of the direction
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 2));
    }

    #[test]
    fn scans_never_mark_free_space_occupied() {
        let mut world = GroundTruthWorld::closed_box([30, 30, 12], 0.3).unwrap();
        world.fill(VoxelKey::new(12, 5, 1), VoxelKey::new(14, 20, 8), true);
        let mut map = OccupancyMap::new(Aabb::from_extent(Vector::new(9.0, 9.0, 3.6)), 0.3).unwrap();
        for (x, yaw) in [(1.5, 0.0), (6.5, PI), (2.0, 0.7)] {
            let origin = Point::new(x, 4.5, 1.5);
            let scan = simulate_scan(&world, &SensorModel::camera(10.0, PI / 2.0, 1.2), &origin, yaw).unwrap();
            for r in scan.iter().filter(|r| r.hit) {
                assert!(world.is_occupied(world.grid().key_at(&r.endpoint)));
                assert!(nalgebra::distance(&r.endpoint, &origin) <= 10.0 + 1e-9);
            }
            map.integrate_scan(&origin, &scan).unwrap();
        }
        for i in 0..map.grid().len() {
            let k = map.grid().key_of(i);
            if map.get(k) == Some(OccupancyState::Occupied) {
                assert!(world.is_occupied(k));
            }
        }
    }
}
