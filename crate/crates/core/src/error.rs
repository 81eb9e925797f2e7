use thiserror::Error;

/// Errors raised by the solver, welfare and oracle routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the domain on which the quantity is defined.
    #[error("{what}: argument {value} outside domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    /// A model or distribution parameter is invalid.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The distribution failed the numerical regularity check.
    #[error("distribution is not regular: min virtual value slope {min_slope:e} ({failing} failing grid points)")]
    NotRegular { min_slope: f64, failing: usize },

    /// A bracketing or iterative method could not converge.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// The implicit-function slope vanished.
    #[error("degenerate slope {slope:e} at v = {at}")]
    DegenerateSlope { slope: f64, at: f64 },

    /// A point of a capacity sweep failed.
    #[error("sweep failed at k = {k}: {source}")]
    SweepPoint { k: f64, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(what: &'static str, value: f64, lo: f64, hi: f64) -> Error {
    Error::Domain {
        what,
        value,
        domain: format!("[{lo}, {hi}]"),
    }
}

pub(crate) fn check_capacity(k: f64) -> Result<()> {
    if k > 0.0 && k < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "capacity k = {k} must lie in (0, 1)"
        )))
    }
}
