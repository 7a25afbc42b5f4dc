use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point at chart radius {radius} lies outside the chart domain (limit {limit})")]
    OutsideChart { radius: f64, limit: f64 },

    #[error("curvature profile is positive ({value}) at t = {t}")]
    PositiveCurvature { t: f64, value: f64 },

    #[error("ODE tolerance {tol} unachievable within {steps} steps (stalled at t = {t})")]
    ToleranceUnachievable { tol: f64, steps: usize, t: f64 },

    #[error("quadrature did not converge: estimate {estimate}, error {error}, tolerance {tol}")]
    QuadratureFailed { estimate: f64, error: f64, tol: f64 },

    #[error("non-integrable singularity: {0}")]
    NonIntegrable(String),

    #[error("integrand returned a non-finite value at {location}")]
    NonFinite { location: String },

    #[error("reference point lies on the divisor (f(o) = {value})")]
    ReferencePointOnDivisor { value: String },

    #[error("unresolvable root cluster near {center} (cell half-width {half_width})")]
    RootCluster { center: String, half_width: f64 },

    #[error("multiplicity above {max} at {location}")]
    MultiplicityTooHigh { max: usize, location: String },

    #[error("evaluation at a zero or pole of the target: {location}")]
    Singular { location: String },

    #[error("target is constant")]
    ConstantTarget,

    #[error("tail estimator did not converge: {0}")]
    TailNonConvergence(String),

    #[error("radius grid too short: {len} radii, need at least {min}")]
    GridTooShort { len: usize, min: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("all {n} paths exceeded the step budget of {budget}")]
    AllPathsCensored { n: usize, budget: u64 },
}
