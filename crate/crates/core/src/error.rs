use std::path::PathBuf;

/// Errors surfaced by the simulation, solver, and I/O layers.
///
/// `exit_code` groups them for command-line use: input and state validation
/// problems map to 2, solver guard rails (search-space and overflow limits)
/// map to 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "signal interval {delta}s leaves no crossing window after startup {startup}s \
         and crossing time {crossing:.3}s"
    )]
    GeometryTooTight {
        delta: f64,
        startup: f64,
        crossing: f64,
    },

    #[error("negative volume at junction {junction} corner {corner} after interval {interval}")]
    NegativeVolume {
        junction: usize,
        corner: usize,
        interval: usize,
    },

    #[error("link {link} over capacity after interval {interval}: {volume} > {max}")]
    LinkOverCapacity {
        link: usize,
        interval: usize,
        volume: i64,
        max: i64,
    },

    #[error("horizon of {steps} intervals exceeds the exact-search limit of {max}")]
    HorizonTooLarge { steps: usize, max: usize },

    #[error("unhappiness exponent {arg:.1} exceeds the saturation bound {bound:.1}")]
    ExponentOverflow { arg: f64, bound: f64 },

    #[error("degenerate scaling: maximum {which} cost is zero")]
    DegenerateScaling { which: &'static str },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("lp parse error at line {line}: {msg}")]
    LpParse { line: usize, msg: String },
}

impl Error {
    /// Process exit code for command-line front ends.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::HorizonTooLarge { .. } | Error::ExponentOverflow { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
