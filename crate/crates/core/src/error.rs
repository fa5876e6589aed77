use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("worker {worker} has no remaining capacity (limit {limit})")]
    WorkerExhausted { worker: usize, limit: usize },

    #[error("object {object} was already evaluated by worker {worker}")]
    DegenerateAllocation { object: usize, worker: usize },

    #[error("worker supply exhausted: {available} workers available")]
    SupplyExhausted { available: usize },

    /// The information matrix is singular (or numerically so). Each entry of
    /// `null_space` is a unit direction of the parameter vector that the
    /// answers collected so far do not constrain.
    #[error("posterior is underdetermined ({} unconstrained direction(s))", null_space.len())]
    Underdetermined { null_space: Vec<Vec<f64>> },

    #[error("objects {first} and {second} cannot be compared: zero variance and equal means")]
    DegenerateComparison { first: usize, second: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
