use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("state outside its domain: {0}")]
    Domain(String),
    #[error("singular evaluation: |sin theta| = {0:e} is below the guard")]
    SingularEvaluation(f64),
    #[error("pole evaluation: 1 - m3^2 = {0:e} is below the guard")]
    PoleEvaluation(f64),
    #[error("initial value lies on an equilibrium of the chart flow")]
    EquilibriumInput,
    #[error("chart flow crosses a pole of tan at xi = {0}")]
    PoleCrossing(f64),
    #[error("orientation: h < beta/alpha describes a left-moving wall, reflect first")]
    Orientation,
    #[error("stability curve pole at h = {0}")]
    CurvePole(f64),
    #[error("q = {q} lies on the invariant line q = {line}")]
    InvariantLine { q: f64, line: f64 },
    #[error("regime mismatch: {0}")]
    Regime(String),
    #[error("profile does not reach the theta = pi chart (theta = {0})")]
    ChartMiss(f64),
    #[error("integration step underflow at xi = {0}")]
    StepFailure(f64),
    #[error("solution blow-up at xi = {0}")]
    BlowUp(f64),
    #[error("spectral mismatch: expected one unstable direction, found {0}")]
    SpectralMismatch(usize),
    #[error("no connection: theta stalled at {0}")]
    NoConnection(f64),
    #[error("Newton iteration did not converge (residual {0:e})")]
    NoConvergence(f64),
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("phase conditions are degenerate")]
    PhaseDegeneracy,
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
