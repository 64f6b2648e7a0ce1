//! Semi-classical kernels `A(z)`, `B(z)` for a given bilinear kernel `H(z)`:
//! fixed-step integration, the z-ordered series and the thin-crystal closed
//! form.

mod ode;
mod series;
mod thin;
mod zsym;

pub use ode::{rhs, solve_ode, OdeDiagnostics, OdeOptions, OdeSolution};
pub use series::{solve_series, MAX_ORDER};
pub use thin::{thin_crystal, thin_crystal_from_profile};
pub use zsym::z_symmetrize;

pub(crate) use ode::{rk4_combine, rk4_stage};

use thiserror::Error;

use crate::linalg;
use crate::Mat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("at least 8 integration steps are required (got {0})")]
    TooFewSteps(usize),

    #[error("series order must be between 1 and {max} (got {got})")]
    InvalidOrder { got: usize, max: usize },

    #[error("z-symmetrization needs at least one factor")]
    EmptyProduct,

    #[error("bilinear kernel is not symmetric: max |H - Hᵀ| = {0:e}")]
    NonSymmetricKernel(f64),

    #[error("{quantity} = {value:e} exceeds tolerance {tol:e} at step {step}; reduce the step size")]
    InvariantViolation { step: usize, quantity: &'static str, value: f64, tol: f64 },

    #[error("kernel varies along the crystal: ‖H(L) - H(0)‖ = {variation:e} × ‖H(0)‖ exceeds {tol:e}")]
    ZDependent { variation: f64, tol: f64 },

    #[error("kernel dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length must be non-negative and finite (got {0})")]
    InvalidLength(f64),
}

/// Semi-classical down-converted state in the normalized basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDCState {
    pub a: Mat,
    pub b: Mat,
    pub z: f64,
}

impl GaussianDCState {
    pub fn vacuum(n: usize) -> Self {
        Self { a: linalg::identity(n), b: linalg::zeros(n), z: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `max |A - A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.a)
    }

    /// `max |B - Bᵀ|`.
    pub fn symmetry_defect(&self) -> f64 {
        linalg::symmetry_defect(&self.b)
    }

    /// Residual of the Bogoliubov conditions `A² − B*B = 𝟙`, `AB* = B*A*`.
    pub fn purity_residual(&self) -> f64 {
        purity_residual(&self.a, &self.b)
    }
}

pub(crate) fn purity_residual(a: &Mat, b: &Mat) -> f64 {
    let bc = linalg::conj(b);
    let ac = linalg::conj(a);
    let first = a.dot(a) - bc.dot(b) - linalg::identity(a.nrows());
    let second = a.dot(&bc) - bc.dot(&ac);
    linalg::max_abs(&first).max(linalg::max_abs(&second))
}

pub(crate) fn check_symmetric(h: &Mat) -> Result<(), SolverError> {
    let defect = linalg::symmetry_defect(h);
    if defect > 1e-12 * linalg::max_abs(h).max(f64::MIN_POSITIVE) {
        return Err(SolverError::NonSymmetricKernel(defect));
    }
    Ok(())
}
