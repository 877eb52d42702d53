use alloc::string::String;
use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised across the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A required named column is absent from a frame.
    #[error("missing column '{0}'")]
    ColumnMissing(String),
    /// An operation received an empty collection it cannot work with.
    #[error("empty input: {0}")]
    EmptyInput(String),
    /// Sequence or tensor lengths that must agree do not.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    /// Fewer observations than the operation requires.
    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    /// A NaN or infinity where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    /// Tensor shapes incompatible with the requested operation.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// Gradients were requested of a non-scalar graph output.
    #[error("gradient target must be a scalar, got shape {0}")]
    NonScalarOutput(String),
    /// The normal equations are singular; a positive ridge fixes this.
    #[error("singular least-squares system; set ridge > 0")]
    SingularSystem,
    /// A configuration value violates its documented range or relation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    /// A period schedule is empty, overlapping, or out of order.
    #[error("invalid schedule: {0}")]
    Schedule(String),
    /// A scored stream hour falls outside every schedule period.
    #[error("hour {0} is not covered by the period schedule")]
    UnscheduledHour(String),
    /// Forecast requested from a model that has seen no observations.
    #[error("model has no observations yet")]
    NoObservations,
    /// Every candidate evaluation in a hyperparameter search failed.
    #[error("hyperparameter search failed: {0}")]
    SearchFailed(String),
    /// A model produced a NaN or infinite prediction; the run aborts.
    #[error("non-finite prediction at stream hour {0}")]
    NonFinitePrediction(String),
}
