use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),
    #[error("reduction failed after {steps} steps (non-finite input?)")]
    ReductionFailure { steps: usize },
    #[error("lattice cutoff {cutoff} insufficient, need at least {required:.3}")]
    CutoffInsufficient { cutoff: i64, required: f64 },
    #[error("non-admissible time change: {0}")]
    NonAdmissible(String),
    #[error("solver did not converge: {0}")]
    Convergence(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("all {n} points below the noise floor {noise_floor:.3e}")]
    AllBelowNoise { n: usize, noise_floor: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure at t = {t}, sample {index}: {source}")]
    AtSample {
        t: f64,
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status: 2 for configuration / admissibility problems,
    /// 1 for everything numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::NonAdmissible(_)
            | Error::CutoffInsufficient { .. }
            | Error::InvalidInput(_) => 2,
            Error::AtSample { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
