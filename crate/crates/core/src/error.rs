use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("singular matrix: pivot {pivot:e} at step {step} below threshold {threshold:e}")]
    SingularMatrix {
        step: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error(
        "zero-forcing column {column}: no well-conditioned server subset after {attempts} draws"
    )]
    ResampleExhausted { column: usize, attempts: usize },

    #[error("no support of size <= {max_support} reproduces the target{}", column_suffix(*column))]
    Infeasible {
        column: Option<usize>,
        max_support: usize,
    },

    #[error("enumeration guard tripped: {0}")]
    TooLarge(String),

    #[error("basis pursuit did not converge after {iterations} iterations{}", column_suffix(*column))]
    NoConvergence {
        column: Option<usize>,
        iterations: usize,
        /// Feasible projection of the last iterate.
        best: Vec<f64>,
    },

    #[error("D D^T is not positive definite; D is not full row rank")]
    RankDeficient,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("subfunction {index}: {reason}")]
    KindMismatch { index: usize, reason: String },

    #[error("solution violates D E = F: residual {residual:e} > {bound:e}")]
    FeasibilityViolated { residual: f64, bound: f64 },
}

fn column_suffix(column: Option<usize>) -> String {
    match column {
        Some(c) => format!(" (column {c})"),
        None => String::new(),
    }
}

impl Error {
    /// Tag a per-column error with the column it came from.
    pub fn at_column(self, col: usize) -> Self {
        match self {
            Error::Infeasible { max_support, .. } => Error::Infeasible {
                column: Some(col),
                max_support,
            },
            Error::NoConvergence {
                iterations, best, ..
            } => Error::NoConvergence {
                column: Some(col),
                iterations,
                best,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
