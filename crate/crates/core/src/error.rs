use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation is not in SO(3): orthonormality error {orthonormality:.3e}, det {det:.6}")]
    InvalidRotation { orthonormality: f64, det: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("color array has {colors} entries but there are {positions} positions")]
    ColorLengthMismatch { positions: usize, colors: usize },

    #[error("nearest-neighbor query on an empty index")]
    EmptyIndex,

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("mesh has no triangles")]
    EmptyMesh,

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("PLY parse error: {0}")]
    Ply(String),

    #[error("symmetry axis is not unit length (norm {norm})")]
    NonUnitAxis { norm: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("points carry no colors but a color tolerance was requested")]
    MissingColors,

    #[error("pattern table was built for candidate set {table:016x}, got {candidates:016x}")]
    CandidateHashMismatch { table: u64, candidates: u64 },

    #[error("pattern cache {path}: {reason}")]
    Cache { path: PathBuf, reason: String },

    #[error("no mesh for object {0}")]
    MissingMesh(u32),

    #[error("model file for object {obj_id} not found at {path}")]
    MissingModel { obj_id: u32, path: PathBuf },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
