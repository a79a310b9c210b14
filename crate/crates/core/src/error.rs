use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("linear solve failed: {0}")]
    SolverFailure(String),

    #[error("value iteration did not converge within {max_iters} iterations (last change {last_change:e})")]
    NonConvergence { max_iters: usize, last_change: f64 },

    #[error("pair (s={state}, a={action}) has zero data mass and kappa = 0; influence is undefined")]
    ZeroDenominator { state: usize, action: usize },

    #[error("behavior probability is zero at episode {episode}, step {step}")]
    ZeroBehaviorProb { episode: usize, step: usize },

    #[error("importance weight is not finite at episode {episode}, step {step}")]
    InfiniteWeight { episode: usize, step: usize },

    #[error("bootstrap replica {replica} failed: {source}")]
    Replica {
        replica: usize,
        #[source]
        source: Box<OpeError>,
    },

    #[error("malformed grid map: {0}")]
    MalformedGrid(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl OpeError {
    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            OpeError::DimensionMismatch(_)
                | OpeError::InvalidArgument(_)
                | OpeError::EmptyInput(_)
                | OpeError::MalformedGrid(_)
                | OpeError::Config(_)
                | OpeError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, OpeError>;
