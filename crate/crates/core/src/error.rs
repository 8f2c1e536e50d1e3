use thiserror::Error;

use crate::distfit::Family;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the modeling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: distance {distance} is smaller than the previous sample ({previous})")]
    Ordering {
        line: usize,
        distance: f64,
        previous: f64,
    },

    #[error("trace contains no data rows")]
    EmptyTrace,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{family} fit failed: {message}")]
    Fit { family: Family, message: String },

    #[error("{family} fit did not converge after {iterations} iterations (last step {last_step:e})")]
    NonConvergence {
        family: Family,
        iterations: usize,
        last_step: f64,
    },

    #[error("degenerate samples: all {count} values are identical")]
    DegenerateSample { count: usize },

    #[error("AICc correction undefined: need n > eta + 1 (n = {n}, eta = {eta})")]
    CorrectionUndefined { n: usize, eta: usize },

    #[error("no candidate family could be fitted: {}", format_failures(.0))]
    Selection(Vec<(Family, String)>),

    #[error("quantizer cell {cell} has probability mass {mass:e}; try fewer levels")]
    DegenerateCell { cell: usize, mass: f64 },

    #[error("interval {index} has no samples")]
    EmptySlice { index: usize },

    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("every interval is deficient; cannot build a model")]
    AllIntervalsDeficient,

    #[error("interval {index}: {source}")]
    Interval {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("traces share no spatial bins")]
    NoOverlap,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_failures(failures: &[(Family, String)]) -> String {
    failures
        .iter()
        .map(|(family, msg)| format!("{family}: {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Fit { .. }
            | Error::NonConvergence { .. }
            | Error::Selection(_)
            | Error::DegenerateCell { .. }
            | Error::AllIntervalsDeficient => true,
            Error::Interval { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn in_interval(self, index: usize) -> Self {
        Error::Interval {
            index,
            source: Box::new(self),
        }
    }
}
