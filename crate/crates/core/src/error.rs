use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular symbol at frequency index {index} (tau = {tau}, xi = {xi:?})")]
    SingularSymbol { index: usize, tau: f64, xi: Vec<f64> },

    #[error("evolution produced a non-finite value at step {step}")]
    Divergence { step: usize },

    #[error("Neumann iteration diverged after {iterations} iterations (contraction estimate {contraction:.3e})")]
    NeumannDivergence { iterations: usize, contraction: f64 },

    #[error("tolerance not met: {0}")]
    Tolerance(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("missing sample: {0}")]
    MissingSample(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics rather than of the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::NeumannDivergence { .. }
                | Error::SingularSymbol { .. }
                | Error::Corrupt(_)
                | Error::Tolerance(_)
        )
    }
}
