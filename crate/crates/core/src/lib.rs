//! Kernel-level simulator for multimode spontaneous parametric down-conversion.
//!
//! The down-converted field is described by a Gaussian Wigner functional
//! `exp(-2α*⋄A⋄α - α⋄B⋄α - α*⋄B*⋄α*)` whose kernels evolve along the crystal.
//! On top of the undepleted-pump (semi-classical) solution the crate solves the
//! first-order kernels that couple the down-converted state to fluctuations of
//! the pump, the pump depletion they imply, and detector expectation values.
//!
//! Layout follows the pipeline:
//!
//! * [`mode_grid`]: discretized optical beam variables and the ⋄-contraction.
//! * [`crystal`]: phase mismatch, vertex, propagation and pump kernels.
//! * [`semiclassical`]: three independent solvers for `A(z)`, `B(z)`.
//! * [`perturbative`]: correction kernels, pump depletion, obstruction residual.
//! * [`observables`]: moments, covariance, detector expectations and the
//!   brute-force phase-space oracle.
//! * [`cli`]: scenario configuration, orchestration and report emission.
//!
//! Past the crystal builders every kernel is stored in the weight-normalized
//! mode basis `Â = W^{1/2} A W^{1/2}`, in which ⋄ is an ordinary matrix product
//! and the discrete identity is the unit matrix.

pub mod cli;
pub mod crystal;
pub mod error;
pub mod linalg;
pub mod mode_grid;
pub mod observables;
pub mod perturbative;
pub mod semiclassical;

pub use error::{Error, Result};

use ndarray::{Array2, Array3};
use num_complex::Complex64;

/// Complex scalar used throughout.
pub type C64 = Complex64;
/// Dense two-index kernel in the normalized mode basis.
pub type Mat = Array2<C64>;
/// Dense three-index kernel `(dc, dc, pump)` in the normalized mode basis.
pub type Tensor3 = Array3<C64>;
