use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported operator `{0}`")]
    UnsupportedOperator(String),

    #[error("grid parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("incompatible potential fields: {0}")]
    IncompatibleFields(String),

    #[error("unknown region `{0}`")]
    UnknownRegion(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("eigensolver did not converge after {iterations} iterations (max residual {residual:.3e} meV)")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("ambiguous Kramers pairing: states {first}..={last} form a cluster of {size} quasi-degenerate levels")]
    AmbiguousPairing { first: usize, last: usize, size: usize },

    #[error("unpaired doublet: {0}")]
    UnpairedDoublet(String),

    #[error("principal axes at the two gate voltages differ by {angle:.3e} rad (tolerance {tolerance:.1e})")]
    AxisMismatch { angle: f64, tolerance: f64 },

    #[error("degenerate Zeeman tensor eigenvalues {0:?}; principal axes are ambiguous")]
    DegenerateTensor([f64; 3]),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
