use thiserror::Error;

use crate::grid::VoxelKey;

#[derive(Debug, Error)]
pub enum Error {
    #[error("resolution must be positive, got {0}")]
    InvalidResolution(f64),
    #[error("bounds must span at least one voxel on every axis")]
    DegenerateBounds,
    #[error("voxel {0:?} is outside the map")]
    KeyOutOfBounds(VoxelKey),
    #[error("point ({x:.3}, {y:.3}, {z:.3}) is outside the map")]
    PointOutOfBounds { x: f64, y: f64, z: f64 },
    #[error("block factor must be a power of two >= {min}, got {factor}")]
    InvalidFactor { factor: u32, min: u32 },
    #[error("sensor pose lies inside an occupied voxel")]
    PoseInObstacle,
    #[error("agent {name} has the wrong motion kind for this operation")]
    WrongMotion { name: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("voxel-world format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn point_out_of_bounds(p: &crate::geometry::Point) -> Self {
        Error::PointOutOfBounds { x: p.x, y: p.y, z: p.z }
    }
}
