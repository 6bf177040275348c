use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid of {requested} nodes exceeds the node budget of {budget}")]
    NodeBudget { requested: usize, budget: usize },

    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "smallness condition violated: bound on the Lippmann-Schwinger operator norm is {bound} (must be < 1)"
    )]
    ContractionViolated { bound: f64 },

    #[error("Neumann series did not reach tolerance {tol} after {iterations} terms (tail bound {tail_bound})")]
    NonConvergence {
        iterations: usize,
        tail_bound: f64,
        tol: f64,
    },

    #[error("orthogonality condition {condition} failed: |value| = {value} exceeds threshold {threshold}")]
    ConditionFailed {
        condition: String,
        value: f64,
        threshold: f64,
    },

    #[error("source is not solvable: sphere restriction max {max_abs} exceeds threshold {threshold}")]
    NotSolvable { max_abs: f64, threshold: f64 },

    #[error("transverse operator violates the zero-mode assumption: {0}")]
    ZeroModeAssumption(String),

    #[error("bisection bracket [{lo}, {hi}] does not enclose a zero of the tuned eigenvalue")]
    InvalidBracket { lo: f64, hi: f64 },

    #[error("stage `{0}` has not been run; no data for this plot")]
    MissingStage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a solvability or admissibility condition, as
    /// opposed to bad input or I/O.
    pub fn is_condition_failure(&self) -> bool {
        matches!(
            self,
            Self::ConditionFailed { .. } | Self::NotSolvable { .. } | Self::ZeroModeAssumption(_) | Self::ContractionViolated { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}
