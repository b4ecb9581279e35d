use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("mass matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("mass matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("{name} is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.6e})")]
    NotPsd {
        name: &'static str,
        min_eigenvalue: f64,
    },

    #[error("closed loop is not Schur stable: spectral radius {rho:.12} (margin {margin:e})")]
    UnstableLoop { rho: f64, margin: f64 },

    #[error("continuous system is not Hurwitz: largest eigenvalue real part {max_real:.6e}")]
    NotHurwitz { max_real: f64 },

    #[error("Lyapunov residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// Numerical failures (instability, solver breakdown) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::UnstableLoop { .. }
                | Error::NotHurwitz { .. }
                | Error::Residual { .. }
                | Error::Solver(_)
        )
    }
}
