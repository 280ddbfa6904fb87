use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("polynomial degree {degree} exceeds the basis degree {max}")]
    DegreeOverflow { degree: usize, max: usize },

    #[error("degree overflow at schedule step {step}: product has degree {degree} > {max}")]
    ScheduleDegreeOverflow { step: usize, degree: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not polynomial-preserving at degree {degree}")]
    NotPolynomialPreserving { degree: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error(
        "spectral structure rejected: {reason} (residual {residual:.3e}, tolerance {tolerance:.3e}); \
         supply an explicit Jordan structure via the `jordan` override"
    )]
    Spectral { reason: String, residual: f64, tolerance: f64 },

    #[error("assumption {assumption} violated: {detail}")]
    AssumptionViolated {
        assumption: &'static str,
        detail: String,
        eigenvalues: Vec<Complex64>,
    },

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("rank deficient: rank {rank}, required {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("moment vector not representable: residual {residual:.3e} > {tolerance:.3e}")]
    NotRepresentable { residual: f64, tolerance: f64 },

    #[error("search exhausted after {steps} steps: {detail}")]
    SearchExhausted { steps: usize, detail: String },

    #[error("lifted rule invariant violated: {0}")]
    Lift(String),

    #[error("invalid rate or transition matrix: {0}")]
    InvalidChain(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
