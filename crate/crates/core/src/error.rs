use faer::c64;
use thiserror::Error;

/// Errors produced by sampling, factorization, root finding and the CLI layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("matrix dimension {n} exceeds the dense limit of {limit}")]
    SizeGuard { n: usize, limit: usize },

    #[error("{mu} is not a spike of this perturbation")]
    UnknownSpike { mu: c64 },

    #[error("expected a unit vector, got norm {norm}")]
    NotUnit { norm: f64 },

    #[error("resolvent is singular at lambda = {lambda} ({reason})")]
    ResolventSingular { lambda: c64, reason: String },

    #[error("shift {lambda} lies inside the closed unit disk")]
    ShiftInsideDisk { lambda: c64 },

    #[error("eigenvector reconstruction is degenerate: |R(lambda) U a| = {norm:e}")]
    DegenerateReconstruction { norm: f64 },

    #[error("newton iteration did not converge in {iterations} steps (last iterate {last})")]
    NoConvergence { iterations: usize, last: c64 },

    #[error("newton iterate {lambda} left the outlier region |z| > {radius}")]
    LeftOutlierRegion { lambda: c64, radius: f64 },

    #[error("root {lambda} duplicates an outlier already located")]
    DuplicateRoot { lambda: c64 },

    #[error("dense eigensolver failed: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
