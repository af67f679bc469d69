use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular dynamics ({reason}) at state {state:?}")]
    SingularDynamics { reason: String, state: Vec<f64> },

    #[error("constraint degeneracy ({reason}) at state {state:?}")]
    ConstraintDegeneracy { reason: String, state: Vec<f64> },

    #[error("non-finite state at step {step}")]
    Divergence { step: usize },

    #[error("RK4 stage {stage}: {source}")]
    Stage { stage: usize, source: Box<Error> },

    #[error("{kind} model: {source}")]
    InModel { kind: String, source: Box<Error> },

    #[error("trajectory {index}: {source}")]
    Trajectory { index: usize, source: Box<Error> },

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDivergence { epoch: usize, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numerics (singular systems, blow-ups)
    /// rather than by configuration or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularDynamics { .. }
            | Error::ConstraintDegeneracy { .. }
            | Error::Divergence { .. }
            | Error::TrainingDivergence { .. } => true,
            Error::Stage { source, .. }
            | Error::InModel { source, .. }
            | Error::Trajectory { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// Innermost error after unwrapping context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. }
            | Error::InModel { source, .. }
            | Error::Trajectory { source, .. } => source.root(),
            e => e,
        }
    }
}
