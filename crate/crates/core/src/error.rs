//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// What a single validation violation is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NonFiniteValue,
    NonBinaryTreatment,
    NonBinaryOutcome,
    ArmMissing,
    ShapeMismatch,
}

/// One invariant violation found while validating a dataset.
#[derive(Debug, Clone)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Row index in the parsed table, when the violation is row-local.
    pub row: Option<usize>,
    /// Column name, when the violation is column-local.
    pub column: Option<String>,
    pub reason: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.row, &self.column) {
            (Some(r), Some(c)) => write!(f, "row {r}, column {c}: {}", self.reason),
            (Some(r), None) => write!(f, "row {r}: {}", self.reason),
            (None, Some(c)) => write!(f, "column {c}: {}", self.reason),
            (None, None) => write!(f, "{}", self.reason),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset validation failed: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{arm} arm has no units")]
    ArmMissing { arm: &'static str },

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("fit did not converge within {iterations} iterations")]
    Nonconvergence { iterations: usize },

    #[error("perfect separation suspected: max |coefficient| = {max_abs_coef:.1} exceeds {threshold}")]
    PerfectSeparation { max_abs_coef: f64, threshold: f64 },

    #[error("degenerate kernel: all training inputs are identical")]
    DegenerateKernel,

    #[error("Hessian is singular beyond the ridge-jitter repair threshold")]
    SingularHessian,

    #[error("subset size {k} out of range 0..={n0}")]
    KOutOfRange { k: usize, n0: usize },

    #[error("every candidate k failed; first failure at k={first_k}: {first_error}")]
    SelectionFailed { first_k: usize, first_error: String },

    #[error("pooled controls must contain both RCT (R=1) and EC (R=0) rows")]
    SourceMissing,

    #[error("mechanism requires at least {min} external controls, got {got}")]
    TooFewEcs { min: usize, got: usize },

    #[error("unknown mechanism `{0}`")]
    UnknownMechanism(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// All violations when this is a validation error, otherwise empty.
    pub fn violations(&self) -> &[Violation] {
        match self {
            Error::Invalid(v) => v,
            _ => &[],
        }
    }
}
