use std::path::PathBuf;

/// Errors produced by the projection engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("frame chain mismatch: expected `{expected}`, found `{found}`")]
    FrameChain { expected: String, found: String },

    #[error("camera rig has no cameras")]
    EmptyRig,

    #[error("{path}: {message}")]
    Validation { path: String, message: String },

    #[error("no frame supplied for camera `{camera}`")]
    MissingFrame { camera: String },

    #[error("frame for camera `{camera}` is {got_w}x{got_h}, intrinsics expect {want_w}x{want_h}")]
    FrameSize {
        camera: String,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },

    #[error("distortion inversion did not converge after {iterations} iterations (residual {residual:e} px)")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("malformed PLY (line {line}): {message}")]
    Ply { line: usize, message: String },

    #[error("malformed LUT cache: {0}")]
    Lut(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the environment (missing files, unreadable
    /// images) rather than by invalid input content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Image { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
