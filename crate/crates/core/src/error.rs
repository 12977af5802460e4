use thiserror::Error;

/// Everything that can go wrong while building, evolving or checking a system.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("inadmissible mixture parameters: {}", .0.join(", "))]
    ConstraintViolated(Vec<String>),

    #[error("epsilon = nu_12 / nu_21 is undefined because nu_21 = 0")]
    UndefinedEpsilon,

    #[error("vacuum state: density {density:e} below floor {floor:e}")]
    VacuumState { density: f64, floor: f64 },

    #[error("translational Maxwellian temperature Lambda = {0:e} is not positive")]
    NonpositiveLambda(f64),

    #[error("{what} = {value:e} is not positive")]
    NonpositiveTemperature { what: &'static str, value: f64 },

    #[error("interspecies temperature {what} = {value:e} is not positive")]
    NonpositiveExchangeTemperature { what: &'static str, value: f64 },

    #[error("distribution lost positivity at t = {time}; minimum value {min:e}")]
    PositivityLoss { time: f64, min: f64 },

    #[error("run aborted at t = {time}: {source}")]
    AbortedAtTime { time: f64, source: Box<Error> },

    #[error("relative entropy is unbounded: reference below floor where f = {0:e}")]
    UnboundedRelativeEntropy(f64),

    #[error("theorem hypotheses unmet: {}", .0.join("; "))]
    HypothesisUnmet(Vec<String>),

    #[error("decay series is degenerate: {0}")]
    DegenerateSeries(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid species: {0}")]
    InvalidSpecies(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("discrete Maxwellian fit failed: {0}")]
    ClosureFailure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
