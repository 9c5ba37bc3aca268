//! Error types shared across the solver stack.
//!
//! The split mirrors the pipeline: parsing/validation problems surface before
//! any matrix exists, assembly problems while building one, solve problems
//! while factoring/iterating. Non-convergence is deliberately a *structured*
//! error carrying the trajectory that led to it — a diverging case is a
//! result to report, not a panic.

use crate::sparse::LuError;
use thiserror::Error;

/// Errors from reading network or scenario files.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// JSON syntax or schema mismatch; serde_json's message names the
    /// offending field and the line/column it sits on.
    #[error("malformed input in {path}: {source}")]
    Malformed {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported schema version {found} (this build reads version {supported})")]
    SchemaVersion { found: u32, supported: u32 },
    #[error("scenario references unknown bus '{bus}'")]
    UnknownScenarioBus { bus: String },
    #[error("{0}")]
    Semantic(String),
}

/// Errors while stamping a system matrix.
#[derive(Debug, Error, Clone)]
pub enum AssemblyError {
    #[error("island without a voltage reference (buses: {})", buses.join(", "))]
    FloatingIsland { buses: Vec<String> },
    #[error("duplicate element id '{id}' (ids share one namespace across element kinds)")]
    DuplicateId { id: String },
    #[error("element '{element}' references unknown bus '{bus}'")]
    UnknownBus { element: String, bus: String },
    #[error("branch '{id}' has a singular phase-impedance block on its energized phases")]
    SingularBranch { id: String },
}

/// Errors from the linear solve layer.
#[derive(Debug, Error, Clone)]
pub enum SolveError {
    #[error("system is singular at column {col} ({unknown})")]
    Singular { col: usize, unknown: String },
    #[error("solution residual {achieved:.3e} exceeds the 1e-10 relative contract")]
    ResidualTooLarge { achieved: f64 },
}

impl SolveError {
    pub fn from_lu(e: LuError, describe: impl Fn(usize) -> String) -> Self {
        match e {
            LuError::Singular { col } => SolveError::Singular { col, unknown: describe(col) },
        }
    }
}

/// Power-flow failures.
#[derive(Debug, Error)]
pub enum PfError {
    /// Newton ran out of iterations. Carries enough to diagnose which
    /// constraint fought back.
    #[error(
        "power flow did not converge in {iterations} iterations \
         (residual {residual_norm:.3e}, worst row: {worst_row})"
    )]
    NonConvergence {
        iterations: usize,
        residual_norm: f64,
        /// Human name of the row with the largest residual at the last iterate.
        worst_row: String,
        /// Infinity-norm of the residual after each iteration.
        history: Vec<f64>,
    },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("network failed validation: {0}")]
    Invalid(String),
}

/// Short-circuit solver failures.
#[derive(Debug, Error)]
pub enum ScError {
    #[error(transparent)]
    Pf(#[from] PfError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("fault at bus '{bus}' touches phase(s) absent from that bus")]
    FaultPhaseAbsent { bus: String },
    #[error("fault bus '{bus}' does not exist")]
    UnknownFaultBus { bus: String },
    /// The outer injection loop hit its iteration cap. The partial result —
    /// including the full per-iteration voltage-change trajectory — rides
    /// along for reporting.
    #[error(
        "short-circuit loop did not converge in {} iterations (max voltage change {:.3e} pu)",
        result.iterations, result.max_delta_v
    )]
    NonConvergence { result: Box<crate::scsolver::ScResult> },
}
