use thiserror::Error;

/// Errors raised by models, filters, smoothers and the online EM driver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is outside its domain ({reason})")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate sufficient statistic: {0}")]
    DegenerateStatistic(String),

    #[error("all particle weights vanished at t = {t} (theta = {theta:?})")]
    Degenerate { t: usize, theta: Vec<f64> },

    #[error("all backward weights vanished at t = {t} for target particle {target} (theta = {theta:?})")]
    BackwardDegenerate { t: usize, target: usize, theta: Vec<f64> },

    #[error("transition density {density} exceeds the declared bound {bound}")]
    ContractViolation { density: f64, bound: f64 },

    #[error("step size error: {0}")]
    Schedule(String),

    #[error("path-space enumeration over {paths} paths refused (limit {limit})")]
    InstanceTooLarge { paths: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("trace sink failed: {0}")]
    Sink(String),
}

impl Error {
    /// True for the numerical degeneracy family (filter or backward kernel).
    pub fn is_degeneracy(&self) -> bool {
        matches!(self, Error::Degenerate { .. } | Error::BackwardDegenerate { .. })
    }

    /// Attaches the parameter in force to a degeneracy error.
    pub fn with_theta(self, value: Vec<f64>) -> Self {
        match self {
            Error::Degenerate { t, .. } => Error::Degenerate { t, theta: value },
            Error::BackwardDegenerate { t, target, .. } => Error::BackwardDegenerate { t, target, theta: value },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
