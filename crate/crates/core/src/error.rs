use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("kernel domain error: requires 0 < s < t <= T, got t={t}, s={s}")]
    KernelDomain { t: f64, s: f64 },

    #[error("quadrature did not converge on [{lower}, {upper}] (estimate {estimate:e}, error {error:e})")]
    Quadrature {
        lower: f64,
        upper: f64,
        estimate: f64,
        error: f64,
    },

    #[error("weight panel ({row}, {col}) failed: {source}")]
    WeightPanel {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cholesky factorization failed at pivot {pivot} (value {value:e})")]
    Factorization { pivot: usize, value: f64 },

    #[error("circulant embedding has negative eigenvalue {value:e} at index {index}")]
    Embedding { index: usize, value: f64 },

    #[error("exponent {exponent} exceeds the representable range at node {node}")]
    ExponentRange { node: usize, exponent: f64 },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("empty sample")]
    EmptySample,

    #[error("unknown test function `{0}`")]
    UnknownTestFunction(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
