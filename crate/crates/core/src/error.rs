use thiserror::Error;

/// Every failure mode of the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SktError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid epsilon context: {0}")]
    ContextInvalid(String),

    #[error("state outside the positive cone (phi = {phi}, psi = {psi})")]
    NonPositiveDenominator { phi: f64, psi: f64 },

    #[error("eps = 0 is not admissible here")]
    EpsilonZero,

    #[error("mu = {mu} outside the open bracket ({lo}, {hi})")]
    OutOfBracket { mu: f64, lo: f64, hi: f64 },

    #[error("A/B = {ratio} must exceed 1 for a reduced root to exist")]
    RatioNotAboveOne { ratio: f64 },

    #[error("h_j never exceeds A/B on the {side} bracket")]
    BracketFailure { side: &'static str },

    #[error("quadrature did not settle at mu = {mu}")]
    QuadratureBreakdown { mu: f64 },

    #[error("leading amplitude s0 = {0} is not positive")]
    NonPositiveAmplitude(f64),

    #[error("degenerate reduced root (determinant {0})")]
    DegenerateRoot(f64),

    #[error("positivity lost at node {node}")]
    PositivityLoss { node: usize },

    #[error("right-hand side not in range: projections ({s}, {t})")]
    RhsNotInRange { s: f64, t: f64 },

    #[error("Newton did not converge after {iterations} iterations (residual {final_norm:e})")]
    NoConvergence { iterations: usize, final_norm: f64 },

    #[error("continuation broke down at eps = {eps}, eta = {eta}")]
    BranchBroken { eps: f64, eta: f64 },

    #[error("no real eigenvalue in [{lo:e}, {hi:e}]")]
    NoRealEigenvalueNearTarget { lo: f64, hi: f64 },

    #[error("C0 = {0} is not negative")]
    SignViolation(f64),

    #[error("implicit step rejected (solve residual {0:e})")]
    StepRejected(f64),

    #[error("perturbation did not double within t = {time}")]
    NoGrowth { time: f64 },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no artifacts found in {0}")]
    MissingArtifacts(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SktError {
    fn from(e: std::io::Error) -> Self {
        SktError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SktError>;
