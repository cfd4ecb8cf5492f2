use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("degenerate immersion: {0}")]
    DegenerateImmersion(String),

    #[error("unsupported chart: {0}")]
    UnsupportedChart(String),

    #[error("missing derivative data: {0}")]
    MissingDerivative(String),

    #[error("submanifold is not minimal for the conformal metric (sup |H̃| = {h_tilde:.3e})")]
    NotMinimal { h_tilde: f64 },

    #[error("non-positive sectional curvature {min_k:.6e} at a sampled point; pinching undefined")]
    NonPositiveCurvature { min_k: f64 },

    #[error("finite-difference step {0:e} outside the admissible range [1e-5, 1e-1]")]
    StepSize(f64),

    #[error("quadrature under-resolved: {0}")]
    Resolution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
