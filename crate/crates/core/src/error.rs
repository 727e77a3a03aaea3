use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("grid too small: support reaches within {margin} cells of the boundary on axis {axis}")]
    GridTooSmall { axis: usize, margin: usize },
    #[error("invalid mass distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
    #[error("intensities sum to {sum}, expected 1 within {tol:e}")]
    Normalization { sum: f64, tol: f64 },
    #[error("expected {expected} states, got {got}")]
    StateCount { expected: usize, got: usize },
    #[error("weak-field guard violated: |deviation| = {value:e} >= {limit}")]
    WeakField { value: f64, limit: f64 },
    #[error("analytic evaluation needs sphere or smeared point sets")]
    NotAnalytic,
    #[error("non-positive input: {0}")]
    NonPositive(&'static str),
    #[error("invalid timeline: {0}")]
    Timeline(String),
    #[error("missing relativistic fields")]
    MissingFields,
    #[error("bundle error: {0}")]
    Bundle(String),
    #[error("area {area} has {count} bundles; more than two requires an explicit override")]
    TooManyBundles { area: String, count: usize },
    #[error("bundle partition changed between snapshots {0} and {1}")]
    PartitionChanged(usize, usize),
    #[error("cascade stalled with {survivors} surviving states and zero total rate")]
    StalledCascade { survivors: usize },
    #[error("cascade exceeded {0} events")]
    MaxEvents(usize),
    #[error("zero DP energy: the superposition does not decay")]
    NoDecay,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
}
