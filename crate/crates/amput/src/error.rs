use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("outside domain of validity: {0}")]
    Domain(String),

    #[error("evaluation at the pole s = 1")]
    Pole,

    #[error("PSOR did not converge at time step {step} after {iters} iterations")]
    NoConvergence { step: usize, iters: usize },

    /// The solution has no active node at a positive time even though the
    /// source mass is positive, so no boundary position can be extracted.
    #[error("degenerate level at t = {t}: no active node above threshold")]
    DegenerateLevel { t: f64 },

    #[error("point (t = {t}, x = {x}) is outside the solution grid")]
    OutOfDomain { t: f64, x: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
