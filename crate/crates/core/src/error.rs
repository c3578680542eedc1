//! Error types shared across the analysis modules.

use thiserror::Error;

/// Errors produced by the linear-algebra, diagram, and harness layers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Input vectors fail the linear-independence check.
    #[error("dependent input: {0}")]
    DependentInput(String),

    /// A subspace chain is not nested within tolerance.
    #[error("chain violation: {0}")]
    ChainViolation(String),

    /// A square basis matrix is singular.
    #[error("singular basis: {0}")]
    SingularBasis(String),

    /// A matrix does not have the required rank.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// Operand shapes are incompatible.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Invalid dimension parameters (e.g. n <= k).
    #[error("bad dimensions: {0}")]
    BadDimensions(String),

    /// Bases passed to a diagram operation are not orthonormal.
    #[error("bases not orthonormal: max deviation {0:.3e}")]
    NonOrthonormalBases(f64),

    /// Witness trace constraints violated (tr D1 > 0, tr D2 = tr D3 = 0).
    #[error("trace violation: {0}")]
    TraceViolation(String),

    /// A search or sampling budget was exhausted before a decision.
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),

    /// Monte Carlo estimate too noisy to report.
    #[error("insufficient samples: relative standard error {0:.3}")]
    InsufficientSamples(f64),

    /// Tuple of vectors does not have unit determinant.
    #[error("non-unit determinant: |det| = {0:.6e}")]
    NonUnitDeterminant(f64),

    /// The stability-margin estimate requires a nondegenerate verdict.
    #[error("stability margin requires a nondegenerate tensor")]
    NotNondegenerate,

    /// Guard regions of successive generations have empty intersection.
    #[error("empty guard: {0}")]
    EmptyGuard(String),

    /// Weighted measure of the base set is zero.
    #[error("zero measure: {0}")]
    ZeroMeasure(String),

    /// Text or JSON input failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    /// I/O failure while reading input or writing a report.
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
