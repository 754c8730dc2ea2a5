use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geotransform linear part is singular (determinant {determinant:e})")]
    SingularTransform { determinant: f64 },

    #[error("no overlap between the requested area and the raster footprint")]
    NoOverlap,

    #[error("coordinate reference systems differ: {left} vs {right}")]
    CrsMismatch { left: String, right: String },

    #[error("requested {target_gsd} m grid is finer than the {source_gsd} m source; only downsampling is supported")]
    UpsampleRequested { source_gsd: f64, target_gsd: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: {axis} coordinate {value} lies outside the {width}x{height} grid")]
    OutOfGrid {
        line: usize,
        axis: &'static str,
        value: f64,
        width: usize,
        height: usize,
    },

    #[error("manifest record {index}: {message}")]
    ManifestParse { index: usize, message: String },

    #[error("need at least {needed} tiepoints, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("design matrix is rank deficient (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("tiepoint set is empty")]
    EmptySet,

    #[error("no consensus: best inlier set has {best} points, need {needed}")]
    NoConsensus { best: usize, needed: usize },

    #[error("no tile footprint intersects the area of interest")]
    NoTile,

    #[error("alignment failed: {0}")]
    FailedAlignment(#[source] Box<Error>),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Tiff(#[from] tiff::TiffError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping file-context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::File { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the command-line tool: 2 for a recoverable
    /// alignment failure, 3 for anything attributable to the inputs.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::NoConsensus { .. } | Error::FailedAlignment(_) => 2,
            _ => 3,
        }
    }
}
