use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("probability {value} out of [0, 1] for {what} at t={t}, x={x}")]
    InvalidProbability {
        what: &'static str,
        value: f64,
        t: f64,
        x: f64,
    },

    #[error("mass would leave the grid at node {node} (velocity {velocity}) during step at t={t}")]
    OutOfGrid { node: i64, velocity: i32, t: f64 },

    #[error("singular inversion at x={x}: 1 - h*gamma = {det}")]
    Singular { x: f64, det: f64 },

    #[error("negative switching rate at x={x}: |V'/(2c)| = {drift} >= theta = {theta}")]
    RateNegativity { x: f64, drift: f64, theta: f64 },

    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },

    #[error("energy check needs the potential V, only its gradient was supplied")]
    MissingPotential,

    #[error("conservation breach: |mass - 1| = {error:e} exceeds {tolerance:e}")]
    ConservationBreach { error: f64, tolerance: f64 },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code: 2 for bad input, 3 for a broken numerical invariant, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_)
            | Error::InvalidParameter(_)
            | Error::InvalidProbability { .. }
            | Error::RateNegativity { .. }
            | Error::MissingPotential
            | Error::Config(_)
            | Error::Json(_) => 2,
            Error::ConservationBreach { .. } => 3,
            _ => 1,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidProbability { .. } => "invalid_probability",
            Error::OutOfGrid { .. } => "out_of_grid",
            Error::Singular { .. } => "singular",
            Error::RateNegativity { .. } => "rate_negativity",
            Error::TooFewSnapshots { .. } => "too_few_snapshots",
            Error::MissingPotential => "missing_potential",
            Error::ConservationBreach { .. } => "conservation_breach",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
