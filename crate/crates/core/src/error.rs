use std::path::PathBuf;

use thiserror::Error;

use crate::grid::{CellAtLevel, FrustumParams, GridCell};

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} must be a power of two and at least 2")]
    InvalidGridSize(u32),
    #[error("invalid frustum parameters {0:?}")]
    InvalidFrustum(FrustumParams),
    #[error("cell {0} is outside the {1}^3 grid")]
    OutOfBounds(GridCell, u32),
    #[error("cell {0} is outside the grid at its level")]
    LevelOutOfBounds(CellAtLevel),
    #[error("level {0} exceeds the octree depth {1}")]
    LevelTooDeep(u8, u8),
    #[error("invalid sensor parameters alpha={alpha}, beta={beta}")]
    InvalidSensor { alpha: f64, beta: f64 },
    #[error("belief has no probability mass left")]
    BeliefCollapsed,
    #[error("particle belief is empty")]
    EmptyParticles,
    #[error("world placement failed after {0} attempts")]
    WorldTooCrowded(usize),
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("episode is already done")]
    EpisodeDone,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
