use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants split into configuration problems (bad input, exit code 2 in the
/// CLI) and numerical failures (exit code 3); see [`Error::is_numerical`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shift rate zeta must be positive to define eta")]
    ZeroShiftRate,
    #[error("rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("discrete loop triple inconsistent with (zeta, sigma): {0}")]
    DimensionalMismatch(String),
    #[error("orbital is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("invalid atom number: {0}")]
    InvalidN(String),
    #[error("state dimension {dim} exceeds the limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },
    #[error("thermal cutoff too tight: retained weight {retained:.6} < 0.999")]
    CutoffTooTight { retained: f64 },
    #[error("grid too coarse: quadrature norm error {0:.3e}")]
    GridTooCoarse(f64),
    #[error("negative intensity on grid at index {0}")]
    NegativeIntensity(usize),
    #[error("radicand of the asymptotic cloud size is negative ({0:.6e})")]
    NegativeRadicand(f64),
    #[error("truncation leak: weight {weight:.3e} near the top orbital exceeds {tolerance:.1e}")]
    TruncationLeak { weight: f64, tolerance: f64 },
    #[error("positivity lost: minimum eigenvalue {0:.3e}")]
    PositivityLoss(f64),
    #[error("covariance step rejected: minimum eigenvalue {0:.3e}")]
    StepRejected(f64),
    #[error("Lyapunov equation singular: no stationary state without damping")]
    SingularLyapunov,
    #[error("measurement resolution {0:e} below the representable minimum")]
    MinResolution(f64),
    #[error("search did not converge: best objective so far {best:.6e}")]
    NonConvergence { best: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::TruncationLeak { .. }
                | Error::PositivityLoss(_)
                | Error::StepRejected(_)
                | Error::SingularLyapunov
                | Error::NonConvergence { .. }
                | Error::NegativeRadicand(_)
                | Error::GridTooCoarse(_)
                | Error::CutoffTooTight { .. }
        )
    }

    /// Short machine-readable tag used in the CLI's stderr JSON.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::ZeroShiftRate => "ZeroShiftRate",
            Error::NonPositiveRate(_) => "NonPositiveRate",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::DimensionalMismatch(_) => "DimensionalMismatch",
            Error::NotNormalized(_) => "NotNormalized",
            Error::InvalidN(_) => "InvalidN",
            Error::DimensionTooLarge { .. } => "DimensionTooLarge",
            Error::CutoffTooTight { .. } => "CutoffTooTight",
            Error::GridTooCoarse(_) => "GridTooCoarse",
            Error::NegativeIntensity(_) => "NegativeIntensity",
            Error::NegativeRadicand(_) => "NegativeRadicand",
            Error::TruncationLeak { .. } => "TruncationLeak",
            Error::PositivityLoss(_) => "PositivityLoss",
            Error::StepRejected(_) => "StepRejected",
            Error::SingularLyapunov => "SingularLyapunov",
            Error::MinResolution(_) => "MinResolution",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
