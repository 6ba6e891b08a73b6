use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("oscillation phase is undefined at zero amplitude")]
    UndefinedPhase,

    #[error("quadrature direction is undefined when the mean amplitude vanishes")]
    UndefinedDirection,

    #[error("state norm vanished")]
    ZeroNorm,

    #[error("displacement |xi|^2 = {xi_sq:.3} exceeds the basis dimension {n_max}")]
    DisplacementOverflow { xi_sq: f64, n_max: usize },

    #[error("basis overflow at t = {t:.6}: tail population {tail:.3e} exceeds tolerance {tol:.1e}")]
    BasisOverflow { t: f64, tail: f64, tol: f64 },

    #[error("mean waiting time did not converge: {0}")]
    NonConvergence(String),

    #[error("covariance matrix is indefinite (min eigenvalue {min_eig:.3e})")]
    Indefinite { min_eig: f64 },

    #[error("amplitude {a:.4} outside tabulated range [{min:.4}, {max:.4}]")]
    OutOfGrid { a: f64, min: f64, max: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn in_trajectory(self, index: usize) -> Self {
        Error::Trajectory {
            index,
            source: Box::new(self),
        }
    }
}
