use ndarray::{Array1, ArrayView2, Axis};

use super::{bogoliubov_matrix, ObservableError};
use crate::linalg;
use crate::perturbative::CorrectionKernels;
use crate::semiclassical::GaussianDCState;
use crate::{Mat, C64};

/// Exponent of the joint down-converted/pump Wigner functional,
///
/// `F(α, β) = −2‖ε‖² − τ(α) − Σ_p (γ_p ε_p + γ_p* ε_p*)`, `ε = β − ζ`,
///
/// with `τ = 2α†A0α + αᵀB0α + α†B0*α*` and
/// `γ_p = 2α†A1_pα + αᵀB1_pα + α†B2_pα*`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerExponent {
    pub a0: Mat,
    pub b0: Mat,
    pub corrections: Option<CorrectionKernels>,
    pub zeta: Array1<C64>,
}

pub fn assemble_state(
    semi: &GaussianDCState,
    corrections: Option<&CorrectionKernels>,
    zeta: &Array1<C64>,
) -> Result<WignerExponent, ObservableError> {
    let n = semi.dim();
    if let Some(c) = corrections {
        let (a, b, p) = c.a1.dim();
        if a != n || b != n {
            return Err(ObservableError::DimensionMismatch { expected: n, got: a });
        }
        if p != zeta.len() {
            return Err(ObservableError::DimensionMismatch { expected: zeta.len(), got: p });
        }
    }
    Ok(WignerExponent { a0: semi.a.clone(), b0: semi.b.clone(), corrections: corrections.cloned(), zeta: zeta.clone() })
}

fn quad(alpha: &[C64], m: ArrayView2<C64>) -> C64 {
    // α†Mα
    let mut acc = C64::new(0.0, 0.0);
    for (i, ai) in alpha.iter().enumerate() {
        for (j, aj) in alpha.iter().enumerate() {
            acc += ai.conj() * m[[i, j]] * aj;
        }
    }
    acc
}

fn bilinear(u: &[C64], m: ArrayView2<C64>, v: &[C64]) -> C64 {
    // uᵀMv
    let mut acc = C64::new(0.0, 0.0);
    for (i, ui) in u.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            acc += ui * m[[i, j]] * vj;
        }
    }
    acc
}

impl WignerExponent {
    pub fn n_dc(&self) -> usize {
        self.a0.nrows()
    }

    pub fn n_pump(&self) -> usize {
        self.zeta.len()
    }

    pub fn tau(&self, alpha: &[C64]) -> f64 {
        2.0 * quad(alpha, self.a0.view()).re + 2.0 * bilinear(alpha, self.b0.view(), alpha).re
    }

    pub fn gamma(&self, alpha: &[C64]) -> Vec<C64> {
        let Some(c) = &self.corrections else {
            return vec![C64::new(0.0, 0.0); self.n_pump()];
        };
        let conj: Vec<C64> = alpha.iter().map(|x| x.conj()).collect();
        (0..self.n_pump())
            .map(|p| {
                quad(alpha, c.a1.index_axis(Axis(2), p)) * 2.0
                    + bilinear(alpha, c.b1.index_axis(Axis(2), p), alpha)
                    + bilinear(&conj, c.b2.index_axis(Axis(2), p), &conj)
            })
            .collect()
    }

    /// `F(α, β)`.
    pub fn evaluate(&self, alpha: &[C64], beta: &[C64]) -> f64 {
        let eps: Vec<C64> = beta.iter().zip(self.zeta.iter()).map(|(b, z)| b - z).collect();
        let pump: f64 = eps.iter().map(|e| e.norm_sqr()).sum();
        let cross: f64 = self.gamma(alpha).iter().zip(&eps).map(|(g, e)| 2.0 * (g * e).re).sum();
        -2.0 * pump - self.tau(alpha) - cross
    }

    /// `ln 𝒩` normalizing the semi-classical factor `exp(−τ)` over `d²ⁿα`.
    pub fn log_dc_normalization(&self) -> Result<f64, ObservableError> {
        let k = bogoliubov_matrix(&self.a0, &self.b0);
        let logdet = linalg::hpd_logdet(&k).ok_or(ObservableError::NotPositiveDefinite)?;
        let n = self.n_dc() as f64;
        Ok(n * (2.0 / std::f64::consts::PI).ln() + 0.5 * logdet)
    }

    /// `ln` of the normalized joint density `𝒩 (2/π)^{n_p} e^{F}`.
    pub fn log_density(&self, alpha: &[C64], beta: &[C64]) -> Result<f64, ObservableError> {
        let np = self.n_pump() as f64;
        Ok(self.log_dc_normalization()? + np * (2.0 / std::f64::consts::PI).ln() + self.evaluate(alpha, beta))
    }

    /// Kernels `A(ε) = A0 + Σ(A1_p ε_p + A1_p† ε_p*)` and
    /// `B(ε) = B0 + Σ(B1_p ε_p + B2_p* ε_p*)`, returned as increments over
    /// `(A0, B0)`.
    pub fn kernel_increments(&self, eps: &[C64]) -> (Mat, Mat) {
        let n = self.n_dc();
        let mut da = linalg::zeros(n);
        let mut db = linalg::zeros(n);
        if let Some(c) = &self.corrections {
            for (p, &e) in eps.iter().enumerate() {
                if e == C64::new(0.0, 0.0) {
                    continue;
                }
                let a1 = c.a1.index_axis(Axis(2), p);
                let b1 = c.b1.index_axis(Axis(2), p);
                let b2 = c.b2.index_axis(Axis(2), p);
                for i in 0..n {
                    for j in 0..n {
                        da[[i, j]] += a1[[i, j]] * e + a1[[j, i]].conj() * e.conj();
                        db[[i, j]] += b1[[i, j]] * e + b2[[i, j]].conj() * e.conj();
                    }
                }
            }
        }
        (da, db)
    }

    /// Pump-traced exponent `−τ + ½Σ|γ_p|²`.
    pub fn trace_out_pump(&self) -> ReducedExponent {
        let non_gaussian = self
            .corrections
            .as_ref()
            .is_some_and(|c| c.norms().iter().any(|&x| x > 0.0));
        ReducedExponent { state: self.clone(), non_gaussian }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedExponent {
    pub state: WignerExponent,
    /// Set when the quartic term is present.
    pub non_gaussian: bool,
}

impl ReducedExponent {
    pub fn evaluate(&self, alpha: &[C64]) -> f64 {
        let quartic: f64 = self.state.gamma(alpha).iter().map(|g| 0.5 * g.norm_sqr()).sum();
        -self.state.tau(alpha) + quartic
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor3;
    use ndarray::Array2;

    fn state(with_corr: bool) -> WignerExponent {
        let semi = GaussianDCState {
            a: Array2::from_elem((1, 1), C64::new(1.1, 0.0)),
            b: Array2::from_elem((1, 1), C64::new(0.0, 0.458)),
            z: 1.0,
        };
        let corr = CorrectionKernels {
            a1: Tensor3::from_elem((1, 1, 1), C64::new(0.01, 0.02)),
            b1: Tensor3::from_elem((1, 1, 1), C64::new(-0.03, 0.01)),
            b2: Tensor3::from_elem((1, 1, 1), C64::new(0.02, -0.02)),
            z: 1.0,
        };
        let zeta = Array1::from_elem(1, C64::new(3.0, 1.0));
        assemble_state(&semi, with_corr.then_some(&corr), &zeta).unwrap()
    }

    #[test]
    fn uncorrected_exponent_factorizes() {
        let s = state(false);
        let alpha = [C64::new(0.3, -0.2)];
        let beta = [C64::new(2.5, 1.4)];
        let eps = beta[0] - s.zeta[0];
        assert_eq!(s.evaluate(&alpha, &beta), -2.0 * eps.norm_sqr() - s.tau(&alpha));
        assert_eq!(s.evaluate(&[C64::new(0.0, 0.0)], &[s.zeta[0]]), 0.0);
        let red = s.trace_out_pump();
        assert!(!red.non_gaussian);
        assert_eq!(red.evaluate(&alpha), -s.tau(&alpha));
    }

    #[test]
    fn vacuum_exponent() {
        let semi = GaussianDCState::vacuum(2);
        let zeta = Array1::from_elem(1, C64::new(1.0, 0.0));
        let s = assemble_state(&semi, None, &zeta).unwrap();
        let alpha = [C64::new(0.3, 0.1), C64::new(-0.2, 0.5)];
        let beta = [C64::new(0.4, 0.2)];
        let a2: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
        let expected = -2.0 * (beta[0] - zeta[0]).norm_sqr() - 2.0 * a2;
        assert!((s.evaluate(&alpha, &beta) - expected).abs() < 1e-15);
    }

    #[test]
    fn single_mode_quartic_coefficient() {
        let s = state(true);
        let red = s.trace_out_pump();
        assert!(red.non_gaussian);
        let alpha = [C64::new(0.4, 0.3)];
        let g = s.gamma(&alpha)[0];
        let q = red.evaluate(&alpha) + s.tau(&alpha);
        assert!((q - 0.5 * g.norm_sqr()).abs() < 1e-15);
        assert_eq!(s.evaluate(&[C64::new(0.0, 0.0)], &[s.zeta[0]]), 0.0);
    }

    #[test]
    fn kernel_increments_reproduce_gamma_terms() {
        let s = state(true);
        let alpha = [C64::new(0.4, -0.7)];
        let eps = [C64::new(0.2, 0.5)];
        let (da, db) = s.kernel_increments(&eps);
        let lhs = 2.0 * quad(&alpha, da.view()).re + 2.0 * bilinear(&alpha, db.view(), &alpha).re;
        let rhs = 2.0 * (s.gamma(&alpha)[0] * eps[0]).re;
        assert!((lhs - rhs).abs() < 1e-15);
        assert!(linalg::hermiticity_defect(&da) < 1e-16);
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let semi = GaussianDCState::vacuum(2);
        let corr = CorrectionKernels::zero(3, 1, 0.0);
        let zeta = Array1::from_elem(1, C64::new(1.0, 0.0));
        assert!(assemble_state(&semi, Some(&corr), &zeta).is_err());
    }
}
