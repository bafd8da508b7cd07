//! Orlicz-energy toolbox: N-function algebra, vectorial truncation and
//! shortening operators, local and nonlocal energy solvers on small uniform
//! grids, and the measurement harness for De Giorgi-type iteration
//! certificates (Caccioppoli ratios, boundedness constants, level-set decay,
//! Poincaré ratios, tail quantities).
//!
//! Everything is plain `f64` on flat `Vec` storage. Assemblies are
//! deterministic by construction: parallel paths reduce per-index partial
//! results in a fixed order, so reports are byte-stable for a fixed
//! (config, seed) pair.

pub mod degiorgi;
pub mod descent;
pub mod expr;
pub mod field_io;
pub mod grid;
pub mod local;
pub mod nfunc;
pub mod nonlocal;
pub mod quad;
pub mod report;
pub mod sampling;
pub mod scenario;
pub mod vecops;

use descent::SolveTrace;

/// Crate-wide error type. `Domain` marks invalid mathematical inputs,
/// `Capability` marks requests a given configuration cannot serve
/// (e.g. inverting a non-monotone tabulated derivative).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("solver failed to converge: {reason} after {} iterations (residual {:.3e})", trace.iterations, trace.residual)]
    Solver { reason: String, trace: Box<SolveTrace> },
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("expression error at byte {pos}: {message}")]
    Expr { pos: usize, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: msg.into() }
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
