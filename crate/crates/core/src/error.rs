use thiserror::Error;

use crate::model::Family;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular design matrix: column(s) {columns:?} are linearly dependent on earlier columns")]
    SingularDesign { columns: Vec<usize> },

    #[error("evaluation failed at row {row}: linear predictor {eta} is outside the admissible range")]
    Evaluation { row: usize, eta: f64 },

    #[error("maximum-likelihood fit did not converge after {iterations} iterations (gradient norm {grad_norm:.3e}); last objective values {tail:?}")]
    FitNotConverged {
        iterations: usize,
        grad_norm: f64,
        tail: Vec<f64>,
    },

    #[error("observed information is singular at the optimum; consider rescaling or centring the covariates")]
    SingularInformation,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("diagnostics error: {0}")]
    Diagnostics(String),

    #[error("{op} is not available for the {family} family")]
    UnsupportedFamily { family: Family, op: &'static str },

    #[error("assignment error: destination {destination} is unreachable from origin {origin} but carries demand {demand}")]
    Unreachable {
        origin: String,
        destination: String,
        demand: f64,
    },

    #[error("ensemble row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
