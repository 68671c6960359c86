use std::path::PathBuf;

use thiserror::Error;

use crate::envgen::{Area, CameraKind, ScenarioKind};
use crate::platform::ModelKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownConfigKeys(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Malformed { path: PathBuf, message: String },

    #[error("invalid route: {0}")]
    InvalidRoute(String),

    #[error("no frame rate defined for {area:?}/{scenario:?}/{camera:?}")]
    InvalidScenario {
        area: Area,
        scenario: ScenarioKind,
        camera: CameraKind,
    },

    #[error("negative processing time {0}")]
    NegativeRho(f64),

    #[error("camera range insufficient at this velocity: {d_min} m is below the {floor} m stopping floor")]
    RangeInsufficient { d_min: f64, floor: f64 },

    #[error("accelerator kind {kind} has no throughput entry for {model:?}")]
    UnknownModel { kind: String, model: ModelKind },

    #[error("unknown accelerator kind {0}")]
    UnknownKind(String),

    #[error("platform configuration is empty")]
    EmptyPlatform,

    #[error("normalization scales must be positive (energy {energy}, time {time})")]
    ZeroScale { energy: f64, time: f64 },

    #[error("scheduler returned accelerator {index} on a platform of {n}")]
    BadDecision { index: usize, n: usize },

    #[error("task {0} depends on a task that is not in the queue or is released later")]
    Dependency(u64),

    #[error("report has no task records")]
    EmptyReport,

    #[error("task {0} not found in report")]
    UnknownTask(u64),

    #[error("trigger task not found: {0}")]
    TriggerNotFound(String),

    #[error("allocation table has no entry for {model:?} during {scenario:?}")]
    MissingAllocation { scenario: ScenarioKind, model: ModelKind },

    #[error("weights shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("flexai scheduler requires a weights file")]
    MissingWeights,

    #[error("unknown scheduler {0}")]
    UnknownScheduler(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 3 config, 4 I/O, 5 domain.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownConfigKeys(_) | Error::Config(_) | Error::UnknownScheduler(_) | Error::MissingWeights => 3,
            Error::Io { .. } | Error::Malformed { .. } => 4,
            _ => 5,
        }
    }
}
