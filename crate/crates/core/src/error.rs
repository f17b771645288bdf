use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("metric is degenerate at {point:?} (smallest |eigenvalue| {magnitude:e})")]
    DegenerateMetric { point: Vec<f64>, magnitude: f64 },

    #[error("metric declares index {declared} but has {found} negative eigenvalues at {point:?}")]
    IndexMismatch {
        declared: usize,
        found: usize,
        point: Vec<f64>,
    },

    #[error("auxiliary metric is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },

    #[error("distribution frames are not independent at {point:?}")]
    RankDeficient { point: Vec<f64> },

    #[error("velocity must be nonzero")]
    ZeroVelocity,

    #[error("integrator step size underflow at t = {t} (h = {h:e})")]
    StepFailure { t: f64, h: f64 },

    #[error("loop is not a closed geodesic (residual {residual:e} > {tol:e})")]
    NotAGeodesic { residual: f64, tol: f64 },

    #[error("geodesic is lightlike; transverse symplectic coordinates do not exist")]
    LightlikeGeodesic,

    #[error("loop would need {requested} samples, capacity is {capacity}")]
    CapacityExceeded { requested: usize, capacity: usize },

    #[error("loop is constant")]
    ConstantLoop,

    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("loop collapsed towards a constant (energy {energy:e} below floor {floor:e})")]
    CollapsedToConstant { energy: f64, floor: f64 },

    #[error("continuation lost nondegeneracy near t = {t}")]
    DegeneracyOnPath { t: f64 },

    #[error("interpolated metric is degenerate at t = {t}")]
    MetricPathDegenerate { t: f64 },

    #[error("Jacobi field is a multiple of the tangent field")]
    TangentJacobiField,

    #[error("Jacobi field is not periodic (residual {residual:e})")]
    NotPeriodicJacobiField { residual: f64 },

    #[error("no subinterval where the curve is injective and transverse to the Jacobi field")]
    NoValidSubinterval,

    #[error("closed geodesic is degenerate; perturbation needs a nondegenerate record")]
    DegenerateRecord,

    #[error("closed geodesic is not lightlike")]
    NotLightlike,

    #[error("perturbation changed the metric index from {expected} to {found}")]
    IndexChanged { expected: usize, found: usize },

    #[error("perturbation budget of {attempts} attempts exhausted: {diagnostics}")]
    BudgetExhausted {
        attempts: usize,
        diagnostics: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
