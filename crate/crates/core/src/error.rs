use thiserror::Error;

/// Errors produced by grid construction, ingestion and numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty grid")]
    EmptyGrid,

    #[error("no default reactance for {0} kV lines")]
    NoDefaultReactance(f64),

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: u64,
        msg: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown bus id {0}")]
    UnknownBus(u64),

    #[error("injections do not balance: sum = {sum:.6e} W")]
    UnbalancedInjections { sum: f64 },

    #[error("dispatch infeasible: {0}")]
    Infeasible(String),

    #[error("eigensolver failed: {0}")]
    EigenFailure(String),

    #[error("mode {alpha} is overdamped (lambda/m - gamma^2/4 <= 0)")]
    OverdampedMode { alpha: usize },

    #[error("no stationary state found after {iterations} Newton iterations (residual {residual:.3e})")]
    NoStationaryState { iterations: usize, residual: f64 },

    #[error("integration failed at t = {t:.6e} s: {msg}")]
    IntegrationFailure { t: f64, msg: String },

    #[error("fault rejected: {0}")]
    FaultPrecondition(String),

    #[error("trajectory horizon too short for the requested RoCoF sampling")]
    InsufficientHorizon,

    #[error("no damping table entry for technology {0:?}")]
    MissingTechnology(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
