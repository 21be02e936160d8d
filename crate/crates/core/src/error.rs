use std::path::PathBuf;

use thiserror::Error;

use crate::probes::ProbeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("invalid detection: {0}")]
    InvalidDetection(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("box ({x}, {y}, {w}, {h}) lies outside the {width}x{height} image")]
    CropOutOfBounds {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        width: usize,
        height: usize,
    },

    #[error("invalid window configuration: {0}")]
    InvalidWindow(String),

    #[error("histogram bin count {0} must divide 256")]
    InvalidBins(usize),

    #[error("probe {probe}: {reason}")]
    Calibration { probe: ProbeId, reason: String },

    #[error("no probe produced a usable axiom: {0}")]
    EmptyAxiomSet(String),

    #[error("axiom syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("no detections to adapt from")]
    NoDetections,

    #[error("stream misalignment: {0}")]
    Misaligned(String),

    #[error("missing image for frame {frame}: {}", path.display())]
    MissingImage { frame: usize, path: PathBuf },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: line {line}: {message}", path.display())]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("PGM {}: {message}", path.display())]
    Pgm { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
