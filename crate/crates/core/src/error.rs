use thiserror::Error;

/// Errors raised by model construction, fitting and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("variance power p = {0} is outside (1, 2)")]
    VariancePower(f64),

    #[error("dispersion phi = {0} must be strictly positive")]
    Dispersion(f64),

    #[error("invalid {field} = {value} for contract at row {row}: {reason}")]
    InvalidObservation {
        row: usize,
        field: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("{what}: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("portfolio has {rows} contracts but the design needs at least {columns}")]
    TooFewContracts { rows: usize, columns: usize },

    #[error("design matrix is rank deficient: columns {} are linearly dependent", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("portfolio is empty")]
    EmptyPortfolio,

    #[error("all loss costs are zero; the intercept initialisation log(0) is undefined")]
    AllZeroLosses,

    #[error("information matrix is not positive definite ({0})")]
    SingularInformation(&'static str),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("objective is not finite at coordinate {0}")]
    NonFinite(usize),

    #[error("fit does not belong to this portfolio: {0}")]
    FitMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
