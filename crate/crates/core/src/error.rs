use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("singular weight 1/|v1| requested without exclusion band or vanishing band: {0}")]
    Singularity(String),

    #[error("vacuum: density {rho:e} is not positive at spatial index {x_index}")]
    Vacuum { x_index: usize, rho: f64 },

    #[error("degenerate temperature tensor (min eigenvalue {min_eig:e}, det {det:e})")]
    DegenerateTensor { min_eig: f64, det: f64 },

    #[error("inadmissible data: {0}")]
    Inadmissible(String),

    #[error("tau too small: iterate {iteration} left the solution space ({condition})")]
    TauTooSmall { iteration: usize, condition: String },

    #[error("no convergence after {iterations} iterations (last distance {last_distance:e})")]
    NonConvergence { iterations: usize, last_distance: f64, alphas: Vec<f64> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn degenerate(min_eig: f64, det: f64) -> Self {
        Error::DegenerateTensor { min_eig, det }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
