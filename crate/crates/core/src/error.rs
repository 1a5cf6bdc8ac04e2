use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("power iteration did not converge after {iterations} iterations (last estimate {last_estimate})")]
    SpectralNonConvergence {
        iterations: usize,
        last_estimate: f64,
        last_iterate: Vec<f64>,
    },

    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("unknown model family `{0}`")]
    UnknownFamily(String),

    #[error("invalid parameters for family `{family}`: {reason}")]
    InvalidParams { family: String, reason: String },

    #[error("model is not subcritical: spectral radius of the branching matrix is {radius}")]
    Supercritical { radius: f64 },

    #[error("invalid spline basis: {0}")]
    InvalidBasis(String),

    #[error("projection normal equations are singular (condition number {condition})")]
    SingularProjection { condition: f64 },

    #[error("cluster population exceeded {limit} individuals; the model is likely not subcritical")]
    Runaway { limit: usize },

    #[error("offspring envelope violated for kernel ({l},{m}) at lag {lag}: value {value} > envelope {envelope}")]
    EnvelopeViolation {
        l: usize,
        m: usize,
        lag: f64,
        value: f64,
        envelope: f64,
    },

    #[error("offspring sampler made {proposals} proposals without acceptance")]
    SamplerStalled { proposals: usize },

    #[error("thinning acceptance ratio {ratio} exceeds 1 at t = {time}")]
    DominatingRate { time: f64, ratio: f64 },

    #[error("moment series did not reach tolerance {tol} within {k_max} terms (achieved bound {achieved})")]
    SeriesTolerance { tol: f64, k_max: usize, achieved: f64 },

    #[error("renewal fixed-point residual {residual} exceeds limit {limit} at x = {x}")]
    RenewalInconsistency { residual: f64, limit: f64, x: f64 },

    #[error("lag {lag} is beyond the moment table coverage {max}")]
    LagOutOfRange { lag: f64, max: f64 },

    #[error("estimation window [{start}, {end}] is not covered by the observation [{lo}, {hi}]")]
    WindowOutOfRange { start: f64, end: f64, lo: f64, hi: f64 },

    #[error("design matrix singular after ridge escalation (eigenvalues in [{min_eig}, {max_eig}])")]
    SingularDesign { min_eig: f64, max_eig: f64 },

    #[error("invalid event stream: {0}")]
    EventStream(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
