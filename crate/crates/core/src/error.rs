use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("vertex {vertex} is outside the source-detector frustum: {reason}")]
    OutsideFrustum { vertex: usize, reason: &'static str },

    #[error("fragment capacity must be even and >= 2, got {0}")]
    InvalidCapacity(usize),

    #[error("image dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("containment violation: {map} length is {value:.4} mm at pixel ({x}, {y})")]
    Containment {
        map: String,
        x: usize,
        y: usize,
        value: f64,
    },

    #[error("no attenuation table for material '{0}'")]
    MissingMaterial(String),

    #[error("invalid material or spectrum table: {0}")]
    InvalidTable(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("invalid shape model: {0}")]
    InvalidModel(String),

    #[error("shape coefficient {index} = {value} exceeds bound {bound}")]
    ShapeOutOfBounds { index: usize, value: f64, bound: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("missing forward artifacts: {0}")]
    MissingForward(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.into(),
        }
    }
}
