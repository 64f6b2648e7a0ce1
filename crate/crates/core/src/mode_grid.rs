//! Discretized optical beam variables `{ω, Kx, Ky}`.
//!
//! Each axis is split into equal cells and sampled at the cell centres. The
//! weight of a mode is its cell volume times the measure `1/((2π)³ k_z)`, so a
//! ⋄-contraction `∫ A(k, k′) B(k′, k″) d̄k′` becomes `Σ_j A_ij w_j B_jk`.
//! Quantities are in natural units (`c = 1`, lengths in crystal lengths).

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::{Mat, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("{axis}: mode count must be at least 1")]
    EmptyAxis { axis: &'static str },

    #[error("{axis}: span must be positive when more than one point is requested (got {span})")]
    NonPositiveSpan { axis: &'static str, span: f64 },

    #[error("frequency axis reaches ω = {omega}; all frequencies must be positive")]
    NonPositiveFrequency { omega: f64 },

    #[error("mode (ω = {omega}, |K| = {k}) is not propagating: |K| must stay below ω")]
    NonParaxial { omega: f64, k: f64 },

    #[error("kernel has shape {got:?}, grid has {expected} modes")]
    ShapeMismatch { expected: usize, got: (usize, usize) },

    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Pump,
    DownConverted,
}

/// One sampled axis: `count` cell centres spread over `span` around `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub center: f64,
    pub span: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn new(center: f64, span: f64, count: usize) -> Self {
        Self { center, span, count }
    }

    /// A single point at `center` with a unit cell.
    pub fn point(center: f64) -> Self {
        Self { center, span: 0.0, count: 1 }
    }

    fn validate(&self, axis: &'static str) -> Result<(), GridError> {
        if self.count == 0 {
            return Err(GridError::EmptyAxis { axis });
        }
        if !self.span.is_finite() || !self.center.is_finite() {
            return Err(GridError::Invalid(format!("{axis}: non-finite centre or span")));
        }
        if self.count > 1 && self.span <= 0.0 {
            return Err(GridError::NonPositiveSpan { axis, span: self.span });
        }
        if self.count == 1 && self.span < 0.0 {
            return Err(GridError::NonPositiveSpan { axis, span: self.span });
        }
        Ok(())
    }

    /// Cell width. A singleton axis with no span gets a unit cell.
    pub fn step(&self) -> f64 {
        if self.span > 0.0 {
            self.span / self.count as f64
        } else {
            1.0
        }
    }

    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.center];
        }
        let d = self.step();
        let lo = self.center - 0.5 * self.span;
        (0..self.count).map(|i| lo + (i as f64 + 0.5) * d).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub kind: FieldKind,
    pub omega: AxisSpec,
    pub kx: AxisSpec,
    pub ky: AxisSpec,
}

impl GridSpec {
    /// Single collinear mode at `omega` with a unit cell.
    pub fn single(kind: FieldKind, omega: f64) -> Self {
        Self {
            kind,
            omega: AxisSpec::point(omega),
            kx: AxisSpec::point(0.0),
            ky: AxisSpec::point(0.0),
        }
    }

    /// Collinear frequency comb (`K = 0`).
    pub fn comb(kind: FieldKind, center: f64, span: f64, count: usize) -> Self {
        Self {
            kind,
            omega: AxisSpec::new(center, span, count),
            kx: AxisSpec::point(0.0),
            ky: AxisSpec::point(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub omega: f64,
    pub kx: f64,
    pub ky: f64,
}

impl Mode {
    pub fn k_perp_sq(&self) -> f64 {
        self.kx * self.kx + self.ky * self.ky
    }

    /// Longitudinal wavenumber `√(ω² − |K|²)`.
    pub fn kz(&self) -> f64 {
        (self.omega * self.omega - self.k_perp_sq()).sqrt()
    }
}

/// Immutable mode set with quadrature weights.
///
/// Mode index is `iω·(nx·ny) + ix·ny + iy`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    spec: GridSpec,
    modes: Vec<Mode>,
    weights: Vec<f64>,
}

pub fn build_grid(spec: &GridSpec) -> Result<ModeGrid, GridError> {
    spec.omega.validate("omega")?;
    spec.kx.validate("kx")?;
    spec.ky.validate("ky")?;

    let omegas = spec.omega.points();
    let kxs = spec.kx.points();
    let kys = spec.ky.points();
    if let Some(&w) = omegas.iter().find(|&&w| w <= 0.0) {
        return Err(GridError::NonPositiveFrequency { omega: w });
    }
    let cell = spec.omega.step() * spec.kx.step() * spec.ky.step();
    let measure = (2.0 * std::f64::consts::PI).powi(3);

    let mut modes = Vec::with_capacity(omegas.len() * kxs.len() * kys.len());
    let mut weights = Vec::with_capacity(modes.capacity());
    for &omega in &omegas {
        for &kx in &kxs {
            for &ky in &kys {
                let mode = Mode { omega, kx, ky };
                let k = mode.k_perp_sq().sqrt();
                if k >= omega {
                    return Err(GridError::NonParaxial { omega, k });
                }
                let w = cell / (measure * mode.kz());
                if !(w.is_finite() && w > 0.0) {
                    return Err(GridError::Invalid(format!("weight {w} at ω = {omega}")));
                }
                modes.push(mode);
                weights.push(w);
            }
        }
    }
    Ok(ModeGrid { spec: spec.clone(), modes, weights })
}

impl ModeGrid {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn kind(&self) -> FieldKind {
        self.spec.kind
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cell widths `(Δω, ΔKx, ΔKy)`.
    pub fn steps(&self) -> (f64, f64, f64) {
        (self.spec.omega.step(), self.spec.kx.step(), self.spec.ky.step())
    }

    /// Raw cell volume `Δω ΔKx ΔKy`, without the measure factor.
    pub fn cell_volume(&self) -> f64 {
        let (a, b, c) = self.steps();
        a * b * c
    }

    pub fn identity(&self) -> DiscreteIdentity {
        DiscreteIdentity {
            values: Array2::from_diag(&Array1::from_iter(
                self.weights.iter().map(|&w| C64::new(1.0 / w, 0.0)),
            )),
        }
    }

    fn check(&self, m: &Mat) -> Result<(), GridError> {
        let n = self.len();
        if m.dim() != (n, n) {
            return Err(GridError::ShapeMismatch { expected: n, got: m.dim() });
        }
        Ok(())
    }

    /// Raw ⋄-contraction `Σ_j a_ij w_j b_jk`.
    pub fn diamond(&self, a: &Mat, b: &Mat) -> Result<Mat, GridError> {
        self.check(a)?;
        self.check(b)?;
        let mut aw = a.clone();
        for (j, mut col) in aw.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|x| x * self.weights[j]);
        }
        Ok(aw.dot(b))
    }

    /// Raw kernel applied to a vector, `Σ_j a_ij w_j v_j`.
    pub fn apply(&self, a: &Mat, v: &Array1<C64>) -> Result<Array1<C64>, GridError> {
        self.check(a)?;
        if v.len() != self.len() {
            return Err(GridError::ShapeMismatch { expected: self.len(), got: (v.len(), 1) });
        }
        let wv = Array1::from_iter(v.iter().zip(&self.weights).map(|(x, &w)| x * w));
        Ok(a.dot(&wv))
    }

    /// Inner product `u†⋄v`.
    pub fn inner(&self, u: &Array1<C64>, v: &Array1<C64>) -> C64 {
        u.iter().zip(v).zip(&self.weights).map(|((a, b), &w)| a.conj() * b * w).sum()
    }

    /// `Â = W^{1/2} A W^{1/2}`.
    pub fn normalize(&self, a: &Mat) -> Result<Mat, GridError> {
        self.check(a)?;
        let s: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        Ok(Array2::from_shape_fn(a.dim(), |(i, j)| a[[i, j]] * (s[i] * s[j])))
    }

    pub fn denormalize(&self, a: &Mat) -> Result<Mat, GridError> {
        self.check(a)?;
        let s: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        Ok(Array2::from_shape_fn(a.dim(), |(i, j)| a[[i, j]] / (s[i] * s[j])))
    }

    /// `v̂ = W^{1/2} v`.
    pub fn normalize_vector(&self, v: &Array1<C64>) -> Array1<C64> {
        Array1::from_iter(v.iter().zip(&self.weights).map(|(x, w)| x * w.sqrt()))
    }

    pub fn denormalize_vector(&self, v: &Array1<C64>) -> Array1<C64> {
        Array1::from_iter(v.iter().zip(&self.weights).map(|(x, w)| x / w.sqrt()))
    }
}

/// Discrete delta kernel, `1/w` on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteIdentity {
    pub values: Mat,
}

pub fn identity_kernel(grid: &ModeGrid) -> DiscreteIdentity {
    grid.identity()
}
