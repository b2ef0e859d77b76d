use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside of [{start}, {end}]")]
    Domain { t: f64, start: f64, end: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("pulse-area calibration failed: {0}")]
    Calibration(String),

    #[error("quadrature did not reach tolerance {tolerance:e} (estimated error {estimate:e})")]
    Quadrature { tolerance: f64, estimate: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("operator `{0}` is not Hermitian")]
    NonHermitian(String),

    #[error("cannot label dressed branches: J and the drive amplitude both vanish")]
    DegenerateBranch,

    #[error("propagation did not converge after {refinements} step halvings (last difference {difference:e})")]
    Convergence { refinements: usize, difference: f64 },

    #[error("unitarity residual {residual:e} exceeds tolerance {tolerance:e}")]
    Unitarity { residual: f64, tolerance: f64 },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("fidelity {0} outside [0, 1]")]
    FidelityRange(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::InvalidParameter { .. } | Error::Config(_) => true,
            Error::Context { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
