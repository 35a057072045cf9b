//! Error types shared across the crate.

use thiserror::Error;

/// Construction errors for the core geometric types.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("coordinate is not finite: ({x}, {y})")]
    NonFinite { x: f64, y: f64 },

    #[error("a landmark set needs at least 3 points, got {got}")]
    TooFewLandmarks { got: usize },

    #[error("landmark sets have different lengths ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },

    #[error("matrix is not a proper rotation (orthogonality defect {defect:.3e})")]
    NotARotation { defect: f64 },

    #[error("spline weights violate the side conditions (defect {defect:.3e})")]
    UnbalancedWeights { defect: f64 },

    #[error("weight count {weights} does not match control point count {controls}")]
    WeightCountMismatch { weights: usize, controls: usize },
}

/// Failures of the closed-form landmark solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("landmark counts differ: {mov} moving vs {fix} fixed")]
    CountMismatch { mov: usize, fix: usize },

    #[error("degenerate landmark configuration: {reason}")]
    DegenerateConfiguration { reason: String },

    #[error("spline system is singular (condition estimate {cond:.3e}): {reason}")]
    SingularSystem { cond: f64, reason: String },

    #[error("regularization weight must be non-negative, got {lambda}")]
    NegativeLambda { lambda: f64 },
}

/// Failures of evaluation metrics and statistics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("shape mismatch: {a_h}x{a_w} vs {b_h}x{b_w}")]
    ShapeMismatch {
        a_h: usize,
        a_w: usize,
        b_h: usize,
        b_w: usize,
    },

    #[error("pixel spacings differ: ({0}, {1}) vs ({2}, {3}) mm")]
    SpacingMismatch(f64, f64, f64, f64),

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("degenerate sample for the t-test: {reason}")]
    DegenerateSample { reason: String },
}

/// Failures of the experiment pipeline.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no input frames")]
    EmptyInput,

    #[error("shape mismatch: {a_h}x{a_w} vs {b_h}x{b_w}")]
    ShapeMismatch {
        a_h: usize,
        a_w: usize,
        b_h: usize,
        b_w: usize,
    },

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Geom(#[from] GeomError),

    #[error(transparent)]
    Solve(#[from] SolveError),

    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Failures when reading or writing the on-disk file formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed {what}: {reason}")]
    Malformed { what: String, reason: String },
}

impl FormatError {
    pub fn malformed(what: impl Into<String>, reason: impl Into<String>) -> Self {
        FormatError::Malformed {
            what: what.into(),
            reason: reason.into(),
        }
    }
}
