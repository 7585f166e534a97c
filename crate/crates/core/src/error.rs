use thiserror::Error;

/// Failures raised by model construction, design routines and the simulator.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: {detail}")]
    Dimension { context: &'static str, detail: String },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("{0} did not converge")]
    NotConverged(&'static str),

    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),

    #[error("{assumption} violated: {detail}")]
    Assumption {
        assumption: &'static str,
        detail: String,
    },

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid attack model: {0}")]
    Attack(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite state at t = {time}: {detail}")]
    NonFinite { time: f64, detail: String },
}

pub type Result<R, E = Error> = std::result::Result<R, E>;

pub(crate) fn dim_err(context: &'static str, detail: impl Into<String>) -> Error {
    Error::Dimension {
        context,
        detail: detail.into(),
    }
}
