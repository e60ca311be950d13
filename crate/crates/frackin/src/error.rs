use thiserror::Error;

/// Errors shared across the suite.
#[derive(Debug, Error)]
pub enum FrackinError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parameter range violated: {0}")]
    ParameterRange(String),

    #[error("quadrature did not converge: requested {requested:.2e}, achieved {achieved:.2e} for {context}")]
    QuadratureNonConvergence {
        context: String,
        requested: f64,
        achieved: f64,
    },

    #[error("time step too large: {0}")]
    TimeStep(String),

    #[error("solver aborted: {0}")]
    SolverAbort(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FrackinError>;
