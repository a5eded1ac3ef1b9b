use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("system is not observable; uncovered modal states {uncovered:?}")]
    NotObservable { uncovered: Vec<usize> },

    #[error("eigenvalues with geometric multiplicity > 1: {0:?}")]
    DegenerateEigenvalue(Vec<String>),

    #[error("repeated eigenvalue {eigenvalue} cannot be diagonalized; supply the matrix in Jordan form")]
    DefectiveMatrix { eigenvalue: String },

    #[error("matrix is not in Jordan canonical form: {0}")]
    NotJordanForm(String),

    #[error("eigenvector matrix condition number {condition:.3e} exceeds limit {limit:.3e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("block {block} with eigenvalue {eigenvalue} has no conjugate partner")]
    UnpairedComplexBlock { block: usize, eigenvalue: String },

    #[error("sensor {sensor}: reduced pair violates intertwining identity (residual {residual:.3e})")]
    IntertwiningViolated { sensor: usize, residual: f64 },

    #[error("attack sparsity {p} exceeds system redundancy index {s_max}")]
    SparsityExceedsRedundancy { p: usize, s_max: usize },

    #[error("gain design infeasible: sigma* = {sigma_star:.6} >= bound {bound:.6}")]
    Infeasible { sigma_star: f64, bound: f64 },

    #[error("sensor {sensor}: gain/threshold inequality violated at gamma = {gamma:.6e}")]
    InequalityViolated { sensor: usize, gamma: f64 },

    #[error("modal state(s) {0:?} are covered by no sensor")]
    EmptyCoverage(Vec<usize>),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("attack support at k = {k} has {size} sensors, budget p = {p}")]
    SparsityViolated { k: u64, size: usize, p: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("simulation diverged at step {k}: {reason}")]
    Diverged { k: u64, reason: String },
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl Error {
    /// Variant name, stable for scripting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::NotObservable { .. } => "NotObservable",
            Error::DegenerateEigenvalue(_) => "DegenerateEigenvalue",
            Error::DefectiveMatrix { .. } => "DefectiveMatrix",
            Error::NotJordanForm(_) => "NotJordanForm",
            Error::IllConditioned { .. } => "IllConditioned",
            Error::UnpairedComplexBlock { .. } => "UnpairedComplexBlock",
            Error::IntertwiningViolated { .. } => "IntertwiningViolated",
            Error::SparsityExceedsRedundancy { .. } => "SparsityExceedsRedundancy",
            Error::Infeasible { .. } => "Infeasible",
            Error::InequalityViolated { .. } => "InequalityViolated",
            Error::EmptyCoverage(_) => "EmptyCoverage",
            Error::NonFiniteInput(_) => "NonFiniteInput",
            Error::SparsityViolated { .. } => "SparsityViolated",
            Error::Parse(_) => "Parse",
            Error::Diverged { .. } => "Diverged",
        }
    }
}
