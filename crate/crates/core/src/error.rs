use thiserror::Error;

use crate::scenario::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid scenario: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("unknown city preset `{0}` (expected Gangnam, Manhattan or Chicago)")]
    UnknownPreset(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Building density is zero, so no blockage ever limits the LOS range.
    #[error("LOS distance is unbounded (zero building density)")]
    UnboundedLos,

    #[error("quadrature did not converge: error estimate {achieved:.3e} exceeds requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("probability {value} is outside [0, 1] by more than round-off")]
    ProbabilityOutOfRange { value: f64 },

    #[error("building field is empty")]
    NoBuildings,
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::UnboundedLos
                | Error::Quadrature { .. }
                | Error::ProbabilityOutOfRange { .. }
        )
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
