use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A configuration value is invalid; `key` is the dotted path of the offending key.
    #[error("invalid configuration at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("time step {dt} exceeds the stability bound {bound} (dt <= 0.4 m dx^2 / hbar)")]
    StabilityBound { dt: f64, bound: f64 },

    #[error("kernel sampling bound violated: m dx^2 / (2 hbar eps) = {ratio} > pi; eps must be at least {min_epsilon}")]
    SamplingBound { ratio: f64, min_epsilon: f64 },

    #[error("grid of {n_points} points exceeds the superoperator cap of {cap}")]
    OracleCap { n_points: usize, cap: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("jump at r = {center} is degenerate: |L psi| = {norm:e}")]
    JumpDegenerate { center: f64, norm: f64 },

    #[error("edge mass {mass:e} exceeds {limit:e} at t = {time}")]
    EdgeMass { mass: f64, limit: f64, time: f64 },

    #[error("phase-space transform lost fidelity: imaginary residue {residue:e} relative to max {max:e}")]
    TransformFidelity { residue: f64, max: f64 },

    #[error("characteristics left the phase-space domain carrying mass {mass:e}")]
    DomainEscape { mass: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unknown scenario preset `{0}`")]
    UnknownPreset(String),

    #[error("not a GRWD file")]
    BadMagic,

    #[error("unsupported GRWD format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("unsupported GRWD payload kind {0}")]
    PayloadKind(u16),

    #[error("truncated GRWD file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short category label used for exit codes and run manifests.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Config { .. }
            | Error::StabilityBound { .. }
            | Error::SamplingBound { .. }
            | Error::OracleCap { .. } => "configuration",
            Error::Domain(_)
            | Error::JumpDegenerate { .. }
            | Error::EdgeMass { .. }
            | Error::DomainEscape { .. } => "domain",
            Error::TransformFidelity { .. } => "fidelity",
            Error::Validation(_) => "validation",
            Error::UnknownPreset(_) => "lookup",
            Error::BadMagic
            | Error::VersionMismatch { .. }
            | Error::PayloadKind(_)
            | Error::Truncated { .. } => "format",
            Error::Io { .. } => "io",
        }
    }
}
