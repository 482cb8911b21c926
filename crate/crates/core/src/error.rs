use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate rotation: quaternion has zero norm")]
    DegenerateRotation,

    #[error("singular covariance (determinant {det:e})")]
    SingularCovariance { det: f64 },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("primitive {index} has a non-finite parameter")]
    NonFinite { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("image of {width}x{height} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall { width: usize, height: usize, window: usize },

    #[error("stale prototype assignment: {0}")]
    StaleAssignment(String),

    #[error("PLY parse error at byte {offset}: {message}")]
    Ply { offset: u64, message: String },

    #[error("COLMAP parse error at {location}: {message}")]
    Colmap { location: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged {
        iteration: usize,
        reason: String,
        /// Primitive parameters at the point of divergence, for dumping.
        state: Box<crate::gaussian::PrimitiveSet>,
    },

    #[error("image error: {0}")]
    Image(#[from] ::image::ImageError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
