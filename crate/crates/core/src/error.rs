use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "class centers {a} and {b} are {distance} apart, need more than {required} (4 x spread) for disjoint classes"
    )]
    SpacingViolation {
        a: usize,
        b: usize,
        distance: f64,
        required: f64,
    },
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("no samples")]
    NoSamples,
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("threshold must be non-negative, got {0}")]
    NegativeDelta(f64),
    #[error("exact clique refused: {nodes} nodes exceed the budget of {budget}; use dual_approx")]
    CliqueBudget { nodes: usize, budget: usize },
    #[error("zero vector cannot be projected")]
    ZeroProjection,
    #[error("unbounded projection: minimum pre-projection norm {0:e} is below 1e-6")]
    UnboundedProjection(f64),
    #[error("embedding norm {0} is not 1 within 1e-6")]
    NonUnitNorm(f64),
    #[error("unstandardized input: {0}")]
    Unstandardized(String),
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("batch of {0} is too small")]
    BatchTooSmall(usize),
    #[error("loss became NaN at step {0}; lower the learning rate")]
    NanLoss(usize),
    #[error("missing bound inputs: {0}")]
    MissingInputs(String),
    #[error("convention mismatch: {0}")]
    Convention(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
