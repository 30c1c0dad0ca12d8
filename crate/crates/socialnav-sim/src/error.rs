use thiserror::Error;

#[derive(Error, Debug)]
pub enum SimError {
    #[error("scene generation failed connectivity after 100 attempts (seed {seed})")]
    SceneGeneration { seed: u64 },
    #[error("spawn sampling failed after {attempts} attempts (seed {seed})")]
    SpawnSampling { seed: u64, attempts: usize },
    #[error("action supplied for done robot {robot}")]
    ActionForDoneRobot { robot: usize },
    #[error("missing action for active robot {robot}")]
    MissingAction { robot: usize },
    #[error("expected {expected} action slots, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("point ({x:.3}, {y:.3}) is not in free space")]
    OccupiedPoint { x: f64, y: f64 },
    #[error("episode record corrupt: path length {path:.3} m is shorter than start geodesic {geodesic:.3} m")]
    CorruptEpisode { path: f64, geodesic: f64 },
    #[error("no episode records to aggregate")]
    EmptyRecords,
    #[error("scene has no free cells to sample from")]
    NoFreeSpace,
    #[error("trace parse error: {0}")]
    Trace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
