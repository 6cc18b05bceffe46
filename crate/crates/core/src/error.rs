use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation and sizing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("infeasible storage step: energy {energy_gwh} GWh outside [0, {e_max_gwh}]")]
    InfeasibleStep { energy_gwh: f64, e_max_gwh: f64 },

    #[error("missing data file {}", .0.display())]
    MissingData(PathBuf),

    #[error("malformed data in {}: {reason}", path.display())]
    MalformedData { path: PathBuf, reason: String },

    #[error("configuration invalid:\n{}", format_violations(.0))]
    Config(Vec<Violation>),

    #[error("QP solver stopped after {iterations} iterations (residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "criterion not monotone in capacity: fails at {fail_gw} GW but succeeds at {success_gw} GW"
    )]
    NonMonotone { success_gw: f64, fail_gw: f64 },

    #[error("samples {samples:?} fail even at the bisection upper bound")]
    ExceedsRange { samples: Vec<usize> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Configuration and input-data problems, as opposed to failures of the study itself.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::MissingData(_)
            | Error::MalformedData { .. }
            | Error::Json(_)
            | Error::Io(_)
            | Error::Csv(_) => true,
            Error::AtStep { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

/// A single configuration violation located by a JSON pointer.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub pointer: String,
    pub message: String,
}

impl Violation {
    pub fn new(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  {}: {}", v.pointer, v.message))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
