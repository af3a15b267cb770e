//! Crate-wide error type and the CLI exit-code mapping.

use thiserror::Error;

/// All fallible operations in this crate return this error.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received a parameter outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A numeric input or intermediate was NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The bracketed scalar minimizer hit a non-finite objective value.
    #[error("scalar minimization failed: {0}")]
    Minimization(String),

    /// `|d2h/dlambda2|` below the invertibility floor (1e-12).
    #[error("singular curvature: |d2h/dlambda2| = {0:e} is below 1e-12")]
    SingularCurvature(f64),

    /// Training loss kept increasing over the patience window.
    #[error("training diverged at iteration {iteration} (loss {loss:e})")]
    Diverged { iteration: usize, loss: f64 },

    /// A requested bound value cannot be reached for any dataset size.
    #[error("target bound {0} is not achievable")]
    UnachievableTarget(f64),

    /// Landscape sweep failed at a specific grid point.
    #[error("landscape evaluation failed at theta = {theta}: {source}")]
    Landscape {
        theta: f64,
        #[source]
        source: Box<Error>,
    },

    /// Configuration file missing, unparseable, or inconsistent.
    #[error("config: {0}")]
    Config(String),

    /// A verification certificate recorded one or more violations.
    #[error("certificate failed: {violations} violation(s), worst ratio {worst_ratio}")]
    CertificateFailed { violations: usize, worst_ratio: f64 },

    /// One or more report sections failed while the rest completed.
    #[error("{failed} report section(s) failed")]
    ReportSections { failed: usize },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status for the CLI: 2 config error, 3 certificate or
    /// assertion failure, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::CertificateFailed { .. } => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(
            Error::CertificateFailed { violations: 1, worst_ratio: 1.5 }.exit_code(),
            3
        );
        assert_eq!(Error::NonFinite("y".into()).exit_code(), 4);
        assert_eq!(Error::SingularCurvature(0.0).exit_code(), 4);
    }
}
