use std::path::PathBuf;

use thiserror::Error;

/// Which half of a recombination carried the degenerate histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Input,
    Homogeneous,
    Illumination,
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Component::Input => "input",
            Component::Homogeneous => "homogeneous component",
            Component::Illumination => "illumination component",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    Format(String),

    #[error("intensity {value} at pixel {index} is outside [0, {max}] after rounding")]
    Range { value: f64, index: usize, max: u32 },

    #[error("histogram has no pixels")]
    EmptyImage,

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("shape mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    Shape {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("correlation is undefined for a constant image")]
    UndefinedCorrelation,

    #[error("contrast is undefined when bright + dark = 0")]
    UndefinedContrast,

    #[error("degenerate histogram in {0}: a single occupied level")]
    DegenerateHistogram(Component),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
