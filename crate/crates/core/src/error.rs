use thiserror::Error;

use crate::eigensolver::EigenSolution;
use crate::materials::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid material `{material}`, group {group}: {reason}")]
    InvalidMaterial { material: String, group: usize, reason: String },

    #[error("material `{name}` failed validation: {}", join_violations(.violations))]
    MaterialViolations { name: String, violations: Vec<Violation> },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid quadrature order {0}: must be even and at least 2")]
    InvalidQuadrature(usize),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("eigenvalue must be positive, got {0}")]
    NonPositiveEigenvalue(f64),

    #[error("no fission source: every material has zero nu-sigma-f")]
    NoFissionSource,

    #[error("fission production vanished during the low-order solve")]
    ZeroFissionNorm,

    #[error("diffusion matrix for group {group} is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { group: usize, row: usize, pivot: f64 },

    #[error("conjugate gradient failed to converge for group {group} after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { group: usize, iterations: usize, residual: f64 },

    #[error("outer iteration did not converge in {} outers (last k = {:.8})", .0.outers, .0.k_eff)]
    NotConverged(Box<EigenSolution>),

    #[error("invalid problem file:\n{}", .0.join("\n"))]
    InvalidInput(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
