use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("moment order violated at t = {t}: second moment {m2} is below squared mean {m1_sq}")]
    MomentOrder { t: f64, m2: f64, m1_sq: f64 },

    /// Query inside the region where the exploratory value function is infinite.
    #[error("ill-posed query at t = {t}: the value function is finite only on ({tau}, {horizon}]")]
    IllPosed { t: f64, tau: f64, horizon: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("volatility matrix is singular or not square")]
    SingularMatrix,

    #[error("training diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
