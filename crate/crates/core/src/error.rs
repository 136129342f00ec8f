use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("row {row} of the transition matrix sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },

    #[error("{what} is not a probability vector: {reason}")]
    InvalidDistribution { what: &'static str, reason: String },

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("state {state} has zero probability at the conditioning time")]
    Unreachable { state: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("eigensolver did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("{name} = {value} is outside its domain ({domain})")]
    Domain { name: &'static str, value: f64, domain: &'static str },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("classic budget is zero; the Laplace scale would be infinite")]
    InfiniteScale,

    #[error("schedule space has {count} candidates, above the cap of {cap}")]
    ScheduleBudget { count: u128, cap: u128 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{0}")]
    Config(String),
}

pub(crate) fn domain(name: &'static str, value: f64, domain_desc: &'static str) -> Error {
    Error::Domain { name, value, domain: domain_desc }
}
