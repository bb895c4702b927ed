use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("exponent {0} outside the admissible range")]
    InvalidExponent(f64),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("zero vector where a nonzero one is required")]
    ZeroVector,

    #[error("grid too small: need at least {needed} points, got {got}")]
    GridTooSmall { needed: usize, got: usize },

    #[error("dimension {got} too small (need at least {min})")]
    DimensionTooSmall { got: usize, min: usize },

    #[error("dimension {got} too large for a dense solve (max {max})")]
    DimensionTooLarge { got: usize, max: usize },

    #[error("weight is negative or non-finite at node {index}")]
    NonPositiveWeight { index: usize },

    #[error("primitive of the weight is not strictly increasing on cell {index}")]
    NotStrictlyIncreasing { index: usize },

    #[error("duplicate angle at positions {first} and {second}")]
    DuplicateAngle { first: usize, second: usize },

    #[error("operator is not in the convolution algebra (lower-triangular Toeplitz)")]
    NotConvolution,

    #[error("[T, [T, M]] does not vanish (residual {residual:e})")]
    NonCommutingDerivation { residual: f64 },

    #[error("witness postcondition violated: {0}")]
    WitnessViolation(String),

    #[error("orbit vanished at step {step}")]
    ZeroOrbit { step: usize },

    #[error("empty point set")]
    EmptyPointSet,

    #[error("target coincides with point {index}")]
    TargetInSet { index: usize },

    #[error("shifted point {index} is degenerate")]
    DegeneratePoint { index: usize },

    #[error("truncation {truncation} is smaller than the point count {points}")]
    TruncationTooSmall { truncation: usize, points: usize },

    #[error("functional annihilates the target")]
    TargetAnnihilated,

    #[error("decay hypothesis fails at n = {n}: (n+1)|u(x_n)|/|x_n| = {ratio:e} exceeds {bound:e}")]
    DecayHypothesis { n: usize, ratio: f64, bound: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
