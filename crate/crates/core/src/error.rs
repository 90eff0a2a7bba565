use thiserror::Error;

pub type Result<T> = std::result::Result<T, GgmError>;

#[derive(Debug, Error)]
pub enum GgmError {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("precision matrix is not positive definite after {attempts} attempt(s)")]
    NotPositiveDefinite { attempts: usize },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("conditioning set {set:?} has a singular covariance block")]
    SingularConditioningSet { set: Vec<usize> },

    #[error("covariance matrix cannot be factorized: {0}")]
    FactorizationFailure(String),

    #[error("need at least {required} samples, got {got}")]
    InsufficientSamples { required: usize, got: usize },

    #[error("covariance block for target {target} on subset {subset:?} is singular")]
    SingularSubmatrix { target: usize, subset: Vec<usize> },

    #[error("coefficient bounds [{lower}, {upper}] clip the optimum for target {target}")]
    BoundsTooTight { target: usize, lower: f64, upper: f64 },

    #[error("estimated conditional variance of vertex {vertex} is not positive ({value:e})")]
    NonPositiveVariance { vertex: usize, value: f64 },

    #[error("no candidate neighborhood passed support testing for vertex {vertex}")]
    NoPassingSet { vertex: usize },

    #[error("parameter out of domain: {0}")]
    DomainError(String),

    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
