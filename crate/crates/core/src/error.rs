//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide error enum. Variants mirror the failure modes of the
/// individual operations; anything reported rather than thrown (graph
/// validation, absence of a resonance) does not appear here.
#[derive(Debug, Error)]
pub enum Error {
    #[error("component is a pure cycle of degree-2 vertices (no anchor to merge toward)")]
    CycleOfDegreeTwo,

    #[error("needle set produced no intersections; the graph is empty")]
    EmptyGraph,

    #[error("frequency must be positive, got k = {0}")]
    InvalidK(f64),

    #[error("k = {k} is not a resonant frequency: smallest singular value {sigma_min:.3e} >= threshold {threshold:.3e}")]
    NotResonant {
        k: f64,
        sigma_min: f64,
        threshold: f64,
    },

    #[error("graphs or coefficient vectors do not match: {0}")]
    GraphMismatch(String),

    #[error("mode has (near-)zero graph norm: {0:.3e}")]
    ZeroMode(f64),

    #[error("arcs do not form the requested shape: {0}")]
    ShapeMismatch(String),

    #[error("resonant frequencies differ: {0} vs {1}")]
    KMismatch(f64, f64),

    #[error("invalid argument: {0}")]
    InvalidArgs(String),

    #[error("mesh spacing target must be positive, got {0}")]
    InvalidDx(f64),

    #[error("time step {dt} violates the CFL bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
