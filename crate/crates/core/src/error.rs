use thiserror::Error;

/// Errors raised across the analysis toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown timing profile variant `{0}`")]
    UnknownVariant(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The process never reaches delivery (for example `p_s = 0` or `p_e = 1`).
    #[error("expected delivery time diverges: {0}")]
    Diverges(String),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("absorption is unreachable from transient state {0}")]
    NonAbsorbing(usize),

    #[error("simulation exceeded {0} steps in a single trial")]
    StepLimit(u64),

    #[error("time {t} outside observation window [{t1}, {t2}]")]
    OutOfWindow { t: f64, t1: f64, t2: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
