//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A profile failed validation. `path` points at the offending field,
    /// e.g. `p.values[3]` or `gamma.breaks[0]`.
    #[error("invalid profile at `{path}`: {message}")]
    InvalidProfile { path: String, message: String },

    /// Two profiles were expected to live on the same interval.
    #[error("domain mismatch: p is defined on [{pa}, {pb}], gamma on [{ga}, {gb}]")]
    DomainMismatch { pa: f64, pb: f64, ga: f64, gb: f64 },

    /// A per-cell integrand produced a non-finite value.
    #[error("integrand is not finite on cell {cell} (p = {p}, gamma = {gamma}, length = {len})")]
    NonFiniteCell { cell: usize, p: f64, gamma: f64, len: f64 },

    /// A point evaluation outside the interval.
    #[error("x = {x} lies outside the interval [{a}, {b}]")]
    OutOfDomain { x: f64, a: f64, b: f64 },

    /// A tabulated curve was queried outside its sample range.
    #[error("m = {m} is outside the tabulated range [{lo}, {hi}]")]
    Extrapolation { m: f64, lo: f64, hi: f64 },

    /// Bracketing failed while inverting a monotone map.
    #[error("failed to bracket a root: {context}")]
    Bracket { context: String },

    /// Conductivity cannot be recovered on the listed cells (p - r = 1 there).
    #[error("conductivity not recoverable on cells {cells:?}: |p - r - 1| below {eps}")]
    NonRecoverableCells { cells: Vec<usize>, eps: f64 },

    /// Derivative order beyond the configured ceiling.
    #[error("derivative order {requested} exceeds the supported maximum {max}")]
    UnsupportedOrder { requested: usize, max: usize },

    /// Measured data violates a structural property of the problem.
    #[error("inconsistent data: {message}")]
    InconsistentData { message: String },

    /// Fewer moments than exponent levels: the level-set system is underdetermined.
    #[error("insufficient moment order: {levels} levels need at least {levels} moments, got {moments}")]
    InsufficientMomentOrder { levels: usize, moments: usize },

    /// Integer overflow in an exact combinatorial computation.
    #[error("integer overflow computing {what} at order {order}")]
    CombinatorialOverflow { what: &'static str, order: usize },

    /// A generic precondition violation on an argument.
    #[error("invalid argument `{name}`: {message}")]
    InvalidArgument { name: &'static str, message: String },

    /// Malformed curve table (CSV import or sample construction).
    #[error("invalid curve table: {message}")]
    InvalidCurveTable { message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid_profile(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidProfile { path: path.into(), message: message.into() }
    }

    pub(crate) fn invalid_argument(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidArgument { name, message: message.into() }
    }
}
