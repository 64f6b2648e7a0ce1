//! Gaussian moments, the perturbative Wigner exponent, detector expectation
//! values and a brute-force phase-space quadrature used as a test oracle.

mod measure;
mod moments;
mod oracle;
mod state;

pub use measure::{
    detector_expectation, mean_photon_number, semiclassical_expectation, DetectorKernel, Expectation, G2A_CONVENTION,
};
pub use moments::{
    bogoliubov_matrix, covariance_matrix, covariance_summary, gaussian_moments, purity, schmidt_spectrum,
    symplectic_eigenvalues, CovarianceSummary, MomentSet,
};
pub use oracle::{
    count_symbol, gauss_hermite, joint_center, joint_log_density, phase_space_oracle, reduced_log_density, QuadratureSpec,
    MAX_ORACLE_DIMS,
};
pub use state::{assemble_state, ReducedExponent, WignerExponent};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("Gaussian quadratic form is not positive definite; the state is not normalizable")]
    NotPositiveDefinite,

    #[error("detector kernel is not Hermitian: max |D - D†| = {0:e}")]
    NonHermitianDetector(f64),

    #[error("detector eigenvalues must lie in [0, 1] (found range [{min}, {max}])")]
    DetectorEfficiency { min: f64, max: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("phase-space oracle supports at most {max} real dimensions (requested {got})")]
    OracleDimension { got: usize, max: usize },

    #[error("covariance matrix is not positive definite")]
    SingularCovariance,
}
