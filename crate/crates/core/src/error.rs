use thiserror::Error;

/// Errors raised by the rendering and sampling engine.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("point is behind the camera (camera-frame z = {z})")]
    BehindCamera { z: f64 },

    /// No valid data was available, e.g. no view sees a point or no pixel
    /// is valid for a metric.
    #[error("no data: {0}")]
    NoData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("render failed at pixel ({x}, {y}): {source}")]
    Pixel {
        x: usize,
        y: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
