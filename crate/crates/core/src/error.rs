use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("trajectory has {trajectory} poses but the scene has {frames} frames")]
    LengthMismatch { trajectory: usize, frames: usize },
    #[error("frame {frame} out of range 1..={frame_count}")]
    FrameOutOfRange { frame: usize, frame_count: usize },
    #[error("image size mismatch: {a_width}x{a_height} vs {b_width}x{b_height}")]
    ImageSizeMismatch {
        a_width: u32,
        a_height: u32,
        b_width: u32,
        b_height: u32,
    },
    #[error("joint structure mismatch: {0}")]
    JointStructure(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid shot: {0}")]
    InvalidShot(String),
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error in {file} at line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("unsupported format version {found} in {file} (expected major {expected})")]
    FormatVersion {
        file: String,
        found: String,
        expected: u32,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

impl Error {
    pub fn at_frame(self, frame: usize) -> Error {
        match self {
            e @ Error::AtFrame { .. } => e,
            e => Error::AtFrame {
                frame,
                source: Box::new(e),
            },
        }
    }

    #[cfg(feature = "io")]
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
