use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("channel count mismatch: {left} vs {right}")]
    ChannelMismatch { left: usize, right: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state vector is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("integration blew up at t = {t}; reduce the time step (dt = {dt})")]
    IntegrationBlowup { t: f64, dt: f64 },

    #[error("photon count recorded at t = {t} but the counting intensity is {intensity:e}")]
    DegenerateJump { t: f64, intensity: f64 },

    #[error("jump probability per step {probability} exceeds 0.1 at t = {t}; reduce dt")]
    JumpProbabilityTooLarge { t: f64, probability: f64 },

    #[error("component {component} unavailable at t = {t}: pulse weight exhausted")]
    ComponentUnavailable { component: &'static str, t: f64 },

    #[error("trajectory {trajectory}, step {step}: {source}")]
    Trajectory {
        trajectory: u64,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} trajectories failed; first failure: {first}")]
    EnsembleFailed {
        failed: usize,
        total: usize,
        first: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical integration itself (as opposed to
    /// invalid inputs).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::IntegrationBlowup { .. }
            | Error::DegenerateJump { .. }
            | Error::JumpProbabilityTooLarge { .. }
            | Error::ComponentUnavailable { .. }
            | Error::EnsembleFailed { .. } => true,
            Error::Trajectory { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
