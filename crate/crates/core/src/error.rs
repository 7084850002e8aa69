use thiserror::Error;

/// Error codes surfaced by every module. `code()` gives the stable
/// upper-case identifier used in CLI messages and manifests.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("points coincide (|x-y| = {0:e})")]
    CoincidentPoints(f64),
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),
    #[error("point is within {dist:e} of the boundary, need at least {min:e}")]
    TooCloseToBoundary { dist: f64, min: f64 },
    #[error("quadrature did not converge: {0}")]
    NoConvergence(String),
    #[error("radius must be positive, got {0:e}")]
    NonpositiveRadius(f64),
    #[error("forcing is not integrable against t|log t|: {0}")]
    NonintegrableForcing(String),
    #[error("far-field coefficient still drifting ({0:e} relative over the last decade)")]
    GridTooShort(f64),
    #[error("no bracket for the boundary condition: {0}")]
    NoBracket(String),
    #[error("step size underflow at s = {0}")]
    Stiffness(f64),
    #[error("requested radius {requested} exceeds the admissible {limit}")]
    Range { requested: f64, limit: f64 },
    #[error("eigenfunction core resolved by {0} grid points, need 50")]
    DiscretizationUnresolved(usize),
    #[error("Newton diverged, last residual {0:e}")]
    NewtonDiverged(f64),
    #[error("mesh under-resolved: {0}")]
    MeshUnderresolved(String),
    #[error("solution negative ({0:e}) at a mesh node")]
    NegativeSolution(f64),
    #[error("eigensolver failed: {0}")]
    EigensolveFail(String),
    #[error("sample point at distance {dist:e} from the peak, need {min:e}")]
    SampleTooClose { dist: f64, min: f64 },
    #[error("ball of radius {0} is not contained in the domain")]
    BallNotContained(f64),
    #[error("field is not harmonic: residual {0:e}")]
    NotHarmonic(f64),
    #[error("points collide (separation {0:e})")]
    CollidingPoints(f64),
    #[error("need at least {need} points, got {got}")]
    InsufficientPoints { need: usize, got: usize },
    #[error("signal below noise: {0}")]
    SignalBelowNoise(String),
    #[error("invalid configuration field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::CoincidentPoints(_) => "COINCIDENT_POINTS",
            Error::OutsideDomain(..) => "OUTSIDE_DOMAIN",
            Error::TooCloseToBoundary { .. } => "TOO_CLOSE_TO_BOUNDARY",
            Error::NoConvergence(_) => "NO_CONVERGENCE",
            Error::NonpositiveRadius(_) => "NONPOSITIVE_RADIUS",
            Error::NonintegrableForcing(_) => "NONINTEGRABLE_FORCING",
            Error::GridTooShort(_) => "GRID_TOO_SHORT",
            Error::NoBracket(_) => "NO_BRACKET",
            Error::Stiffness(_) => "STIFFNESS",
            Error::Range { .. } => "RANGE",
            Error::DiscretizationUnresolved(_) => "DISCRETIZATION_UNRESOLVED",
            Error::NewtonDiverged(_) => "NEWTON_DIVERGED",
            Error::MeshUnderresolved(_) => "MESH_UNDERRESOLVED",
            Error::NegativeSolution(_) => "NEGATIVE_SOLUTION",
            Error::EigensolveFail(_) => "EIGENSOLVE_FAIL",
            Error::SampleTooClose { .. } => "SAMPLE_TOO_CLOSE",
            Error::BallNotContained(_) => "BALL_NOT_CONTAINED",
            Error::NotHarmonic(_) => "NOT_HARMONIC",
            Error::CollidingPoints(_) => "COLLIDING_POINTS",
            Error::InsufficientPoints { .. } => "INSUFFICIENT_POINTS",
            Error::SignalBelowNoise(_) => "SIGNAL_BELOW_NOISE",
            Error::ConfigInvalid { .. } => "CONFIG_INVALID",
            Error::InvalidDomain(_) => "INVALID_DOMAIN",
            Error::InvalidMesh(_) => "INVALID_MESH",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
