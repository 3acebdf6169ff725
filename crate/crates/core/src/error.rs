use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("covariate dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("relative risk {value:.4} exceeds the overflow guard |f| <= {limit}")]
    RiskOverflow { value: f64, limit: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("combinatorial budget exceeded: C({n},{s}) = {count} subsets > {budget}")]
    CombinatorialBudget {
        n: usize,
        s: usize,
        count: u128,
        budget: u128,
    },

    #[error("matrix inversion failed: eigenvalue {value:.3e} below floor {floor:.1e}; {hint}")]
    SingularMatrix {
        value: f64,
        floor: f64,
        hint: &'static str,
    },

    #[error(
        "Newton did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})"
    )]
    NewtonNonConvergence { iterations: usize, grad_norm: f64 },

    #[error("SGD diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: u64, reason: String },

    #[error("censoring calibration failed: {0}")]
    Calibration(String),

    #[error("CSV parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
