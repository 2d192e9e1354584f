use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong while sampling, simulating or analysing a
/// hard-sphere trajectory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spheres overlap: separation {distance:e} is below diameter {eps:e}")]
    Overlap { distance: f64, eps: f64 },

    #[error(
        "overlap between particles {i} and {j} at t = {time}: separation {distance:e}, \
         diameter {eps:e}\n{dump}"
    )]
    CorruptedState {
        time: f64,
        i: usize,
        j: usize,
        distance: f64,
        eps: f64,
        dump: String,
    },

    #[error("pair is not incoming: omega . (v_i - v_j) = {0:e}")]
    NotIncoming(f64),

    #[error("position sampling gave up after {attempts} attempts")]
    SamplingFailed { attempts: u64 },

    #[error("creation {r} overlaps an existing sphere (particle {other})")]
    CreationOverlap { r: usize, other: usize },

    #[error("creation {r} is pre-collisional: omega . (v_new - v_parent) = {dot:e}")]
    PreCollisionalCreation { r: usize, dot: f64 },

    #[error("no collisions observed; try a longer horizon")]
    NoCollisions,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
