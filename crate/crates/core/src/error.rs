use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("linear system is numerically singular (condition estimate {condition_estimate:.3e})")]
    IllConditioned { condition_estimate: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical breakdown: {0}")]
    Breakdown(String),

    #[error("trajectory {traj_index}: {source}")]
    Trajectory {
        traj_index: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
