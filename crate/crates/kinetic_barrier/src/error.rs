//! Error type shared by every module, and its mapping onto CLI exit codes.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{field}` out of range: {detail}")]
    OutOfRange { field: &'static str, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("time t = {0} is singular for the configured amplitude schedule")]
    SingularTime(f64),

    #[error("angle theta = 0 is singular for the angular kernel")]
    SingularAngle,

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("degenerate pair: |v' - v| = {0:e} is below the resolution floor")]
    DegeneratePair(f64),

    #[error("principal value shells failed the Cauchy test: {0}")]
    PvDivergence(String),

    #[error("no mass core found on the threshold/radius ladder: {0}")]
    NoCore(String),

    #[error("no direction passed the cone threshold: {0}")]
    EmptyCone(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("wrong regime: {0}")]
    WrongRegime(String),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("blow-up at step {step}: {detail}")]
    BlowUp { step: usize, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code used by the command-line front end.
    ///
    /// Parameter, configuration and precondition problems are usage errors (2);
    /// failures of the numerics themselves are reported as 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BlowUp { .. }
            | Error::QuadratureNonConvergence(_)
            | Error::PvDivergence(_)
            | Error::CalibrationFailed(_) => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
