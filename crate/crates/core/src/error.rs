use std::path::PathBuf;

use crate::geometry::CameraId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("empty region of interest")]
    EmptyRoi,

    #[error("no training samples of class {0}")]
    NoSamples(&'static str),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("no free space for surrogate cameras")]
    NoFreeSpace,

    #[error("registration chain impossible for camera {0}")]
    ChainImpossible(CameraId),

    #[error("unknown scene preset {0:?}")]
    UnknownPreset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("malformed {format}: {message}")]
    Parse {
        format: &'static str,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake-case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidCamera(_) => "invalid_camera",
            Error::InvalidMesh(_) => "invalid_mesh",
            Error::DegenerateGeometry(_) => "degenerate_geometry",
            Error::SingularGeometry(_) => "singular_geometry",
            Error::EmptyRoi => "empty_roi",
            Error::NoSamples(_) => "no_samples",
            Error::Infeasible(_) => "infeasible",
            Error::NoFreeSpace => "no_free_space",
            Error::ChainImpossible(_) => "chain_impossible",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::Config(_) => "config",
            Error::Format { .. } => "format",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn parse(format: &'static str, message: impl Into<String>) -> Self {
        Error::Parse {
            format,
            message: message.into(),
        }
    }
}
