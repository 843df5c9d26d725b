use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input {value} passed to {context}")]
    Domain { context: &'static str, value: f64 },

    #[error("inverse bracket for y = {y} exceeded the overflow guard; the map does not look surjective")]
    Unbounded { y: f64 },

    #[error("coercivity constant for b = {b} not attained inside |xi| <= {window}")]
    CoercivityFailure { b: f64, window: f64 },

    #[error("bisection for the kernel constant failed to bracket a root")]
    BracketFailure,

    #[error("invalid phi operator: {0}")]
    InvalidPhi(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("evaluation of {what} produced a non-finite value at t = {t}, u = {u}")]
    NonFinite { what: &'static str, t: f64, u: f64 },

    #[error("cannot normalize: q is unbounded in both directions and no limits are declared")]
    CannotNormalize,

    #[error("unknown example `{0}`")]
    UnknownExample(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("bounded-tail solution violates the bound: required {required}, measured {measured}")]
    BoundViolation { required: f64, measured: f64 },

    #[error("averaged map vanishes at the interval endpoint {xi} (|F#| = {value:e})")]
    BoundaryDegeneracy { xi: f64, value: f64 },

    #[error("problem family could not be classified as type I or type II")]
    UnsupportedFamily,

    #[error("expression error: {0}")]
    Expr(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
