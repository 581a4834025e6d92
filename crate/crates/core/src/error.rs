use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least {min} values, got {got}")]
    TooShort { got: usize, min: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("singular design: observed dispersion {sxx:e} is below the cancellation threshold {threshold:e}")]
    SingularDesign { sxx: f64, threshold: f64 },

    #[error("{family} has no finite moment of order {order}")]
    MomentDoesNotExist { family: String, order: f64 },

    #[error("latent errors were not retained in the sample")]
    MissingLatents,

    #[error("variance of the composite error is zero")]
    ZeroVariance,

    #[error("design dispersion S_n is zero")]
    ZeroDispersion,

    #[error("grid must be strictly increasing with every entry >= {min}")]
    InvalidGrid { min: usize },

    #[error("replicate count {got} is below the minimum {min} for distributional tests")]
    TooFewReplicates { got: usize, min: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature failed to reach tolerance (estimate {estimate:e}, error {error:e})")]
    Quadrature { estimate: f64, error: f64 },
}
