use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |A - A^H| entry is {max_deviation:e}")]
    NonHermitianInput { max_deviation: f64 },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ambiguous eigenvector alignment for level {level}: best overlap {overlap:.6} (grid too coarse near an anticrossing?)")]
    AmbiguousAlignment { level: usize, overlap: f64 },

    #[error("degenerate levels {m} and {n}: separation {gap:e}{}", at_time(*.t))]
    DegenerateLevels {
        m: usize,
        n: usize,
        gap: f64,
        t: Option<f64>,
    },

    #[error("t = {t} outside schedule range [{t0}, {t1}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("noise step must be positive, got d_lambda = {0:e}")]
    NonPositiveStep(f64),

    #[error("noise process is {actual}, operation requires {expected}")]
    WrongNoiseKind {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("step collapsed: {substeps} substeps did not cover the step at t = {t}")]
    StepCollapse { t: f64, substeps: usize },

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("CSV schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn at_time(t: Option<f64>) -> String {
    match t {
        Some(t) => format!(" at t = {t}"),
        None => String::new(),
    }
}

/// Coarse classification used for process exit codes and machine-readable
/// error reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Degeneracy,
    Io,
    Schema,
    Numeric,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Degeneracy => "degeneracy",
            ErrorCategory::Io => "io",
            ErrorCategory::Schema => "schema",
            ErrorCategory::Numeric => "numeric",
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_)
            | Error::InvalidSchedule(_)
            | Error::InvalidDensityMatrix(_)
            | Error::Json(_)
            | Error::NotSquare { .. }
            | Error::DimensionMismatch { .. }
            | Error::NonHermitianInput { .. }
            | Error::WrongNoiseKind { .. } => ErrorCategory::Config,
            Error::DegenerateLevels { .. }
            | Error::AmbiguousAlignment { .. }
            | Error::StepCollapse { .. } => ErrorCategory::Degeneracy,
            Error::Io(_) => ErrorCategory::Io,
            Error::SchemaMismatch(_) | Error::Csv(_) | Error::GridMismatch(_) => ErrorCategory::Schema,
            Error::OutOfRange { .. } | Error::NonPositiveStep(_) => ErrorCategory::Numeric,
        }
    }

    /// Attaches the simulation time to a degeneracy error raised deep inside a
    /// right-hand side evaluation.
    pub(crate) fn at(self, time: f64) -> Self {
        match self {
            Error::DegenerateLevels { m, n, gap, t: None } => Error::DegenerateLevels {
                m,
                n,
                gap,
                t: Some(time),
            },
            other => other,
        }
    }
}
