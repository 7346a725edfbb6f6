use thiserror::Error;

use crate::model::Finding;

/// Failure modes shared by the solvers, oracles and the CLI.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {}", join_findings(.0))]
    InvalidInput(Vec<Finding>),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported number of topics {n} (allowed {min}..={max})")]
    Dimension { n: usize, min: usize, max: usize },

    #[error("all cluster counts are zero")]
    EmptyText,

    #[error("absolute continuity violated at ({row}, {col}): numerator mass is positive but reference entry is zero")]
    AbsoluteContinuityViolation { row: usize, col: usize },

    #[error("{stage} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
        /// Objective values recorded before giving up (outer loop only).
        partial_trace: Vec<f64>,
    },

    #[error("{stage}: dual iterate left the admissible domain ({detail})")]
    DualDomainViolation { stage: &'static str, detail: String },

    #[error("no feasible reverse transition matrix (marginal residual {residual:e})")]
    InfeasibleReverse { residual: f64 },

    #[error("domain error: {0}")]
    DomainError(String),
}

fn join_findings(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
