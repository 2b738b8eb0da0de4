use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("row {row} sums to {sum}, expected 1")]
    NonStochasticRow { row: usize, sum: f64 },

    #[error("entry ({row}, {col}) is negative or not finite: {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("output column {col} is zero for some inputs and positive for others (infinite LDP parameter)")]
    InfiniteLdp { col: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("inputs must differ (got a = b = {0})")]
    SameInput(usize),

    #[error("input index {index} out of range for d = {d}")]
    InputOutOfRange { index: usize, d: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("lambda must exceed 1 (got {0})")]
    BadLambda(f64),

    #[error("invalid parameters: {0}")]
    BadParams(String),

    #[error("half-block channels need an even d (got {0})")]
    OddD(usize),

    #[error("masses sum to {sum}, expected 1")]
    MassMismatch { sum: f64 },

    #[error("alphabet of {size} outputs exceeds the cap of {cap}")]
    AlphabetTooLarge { size: f64, cap: f64 },

    #[error("orbit template sums to {sum}, expected d = {d}")]
    TemplateSumError { sum: f64, d: usize },

    #[error("materialization too large: {0}")]
    TooLarge(String),

    #[error("likelihood-ratio law is invalid: {0}")]
    BadLaw(String),

    #[error("enumeration of {count} compositions exceeds the guard of {cap}")]
    EnumerationTooLarge { count: f64, cap: f64 },

    #[error("mu must be positive (got {0})")]
    BadMu(f64),

    #[error("epsilon must be positive (got {0})")]
    BadEps(f64),

    #[error("pairwise information is zero")]
    ZeroInformation,

    #[error("theta is not a point of the simplex: {0}")]
    SimplexViolation(String),

    #[error("output law has zero mass at output {0}")]
    DegenerateMixture(usize),

    #[error("Fisher information is singular on the tangent space; the bound is vacuous")]
    SingularFisher,

    #[error("rho must lie in (0, 1/(d-1)) (got {0})")]
    BadRho(f64),

    #[error("cube side delta must lie in (0, 1/(4(d-1))] (got {0})")]
    BadDelta(f64),

    #[error("cube with 2^{0} vertices is too large")]
    TooManyVertices(usize),

    #[error("the low-budget knee needs d >= 3 (C*(2) = 0), got d = {0}")]
    DTooSmall(usize),

    #[error("budget must be positive (got {0})")]
    BadBudget(f64),

    #[error("root solve did not converge: {0}")]
    NoConvergence(String),

    #[error("signal coefficient is zero; the projected estimator is undefined")]
    ZeroSignal,

    #[error("orbit template is neutral (B = d)")]
    NeutralOrbit,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("estimator does not match the channel layout: {0}")]
    EstimatorMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
