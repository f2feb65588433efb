use thiserror::Error;

use crate::daps::WSelection;

pub type Result<T> = std::result::Result<T, DapsmError>;

#[derive(Debug, Error)]
pub enum DapsmError {
    #[error("invalid input: {0}")]
    Input(String),

    /// Every treated-control pair is the same distance apart, so min-max
    /// standardization has a zero range.
    #[error("all treated-control distances equal {0}; min-max standardization is undefined")]
    DegenerateScale(f64),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("perfect separation: coefficient for `{column}` reached {value:.3}")]
    Separation { column: String, value: f64 },

    #[error("logistic fit did not converge in {iterations} iterations (score norm {score_norm:e})")]
    Convergence { iterations: usize, score_norm: f64 },

    #[error("covariate `{0}` has zero standard deviation among treated units")]
    DegenerateCovariate(String),

    #[error("no value of w balanced all covariates at cutoff {}", .0.cutoff)]
    NoBalancedW(Box<WSelection>),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl DapsmError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        DapsmError::Input(msg.into())
    }
}
