use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length mismatch: expected {expected} bits, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("value {value} outside the domain [{lo}, {hi}] of {what}")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "n = {n} exceeds the exact-enumeration cap of {cap}; use the Monte Carlo estimator instead"
    )]
    ResourceCap { n: usize, cap: usize },

    #[error("observation sequence is empty")]
    EmptyObservation,

    #[error("observation sequence has zero probability under the source model")]
    ImpossibleObservation,

    #[error("invalid hex encoding: {0}")]
    Hex(String),
}

pub type Result<T> = std::result::Result<T, Error>;
