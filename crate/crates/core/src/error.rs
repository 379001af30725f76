use thiserror::Error;

/// Errors raised by the sensing, valuation and auction layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("k-out-of-N optimum undefined: {0}")]
    OptimalKUndefined(String),

    #[error("fusion threshold k={k} out of range for {n} decisions")]
    ThresholdOutOfRange { k: usize, n: usize },

    #[error("no sensing input: every decision was excluded from fusion")]
    NoSensingInput,

    #[error("empty decision vector")]
    EmptyDecisions,

    #[error("valuation {value} outside support [{lo}, {hi}]")]
    OutsideSupport { value: f64, lo: f64, hi: f64 },

    #[error("virtual valuation undefined at t={0}: zero density")]
    VirtualValuationUndefined(f64),

    #[error("no allocation regime: q0 = 0, reserve undefined")]
    NoAllocationRegime,

    #[error("allocation shares over the winner set sum to {0}, expected 1")]
    InvalidShares(f64),

    #[error("inconsistent auction state: {0}")]
    Inconsistent(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("heterogeneous sensors are not supported by closed-form fusion statistics")]
    HeterogeneousSensors,

    #[error("throughput bound needs a common scale c, got {0:?}")]
    HeterogeneousScale(Vec<f64>),

    #[error("empirical model: {0}")]
    EmpiricalModel(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
