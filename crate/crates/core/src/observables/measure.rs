use ndarray::{s, Array1};
use rayon::prelude::*;
use serde::Serialize;

use super::{bogoliubov_matrix, ObservableError, WignerExponent};
use crate::linalg;
use crate::{Mat, C64};

/// Normalization of the pump-fluctuation average behind the second-order
/// correction.
pub const G2A_CONVENTION: &str = "epsilon = beta - zeta with <|eps_p|^2> = 1/2 per pump mode (symmetric ordering); \
G2a = (1/8) sum_p (d^2/dx_p^2 + d^2/dy_p^2) g(eps) at eps = 0, eps_p = x_p + i y_p";

/// Hermitian detector kernel `D̂` in the normalized basis, eigenvalues in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorKernel {
    matrix: Mat,
}

impl DetectorKernel {
    pub fn new(matrix: Mat) -> Result<Self, ObservableError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(ObservableError::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        let scale = linalg::max_abs(&matrix).max(1.0);
        let defect = linalg::hermiticity_defect(&matrix);
        if defect > 1e-12 * scale {
            return Err(ObservableError::NonHermitianDetector(defect));
        }
        let ev = linalg::hermitian_eigenvalues(&matrix);
        let (min, max) = (ev.first().copied().unwrap_or(0.0), ev.last().copied().unwrap_or(0.0));
        if min < -1e-12 || max > 1.0 + 1e-12 {
            return Err(ObservableError::DetectorEfficiency { min, max });
        }
        Ok(Self { matrix })
    }

    /// Counts every mode.
    pub fn all(n: usize) -> Self {
        Self { matrix: linalg::identity(n) }
    }

    /// Diagonal detector with per-mode efficiencies.
    pub fn diagonal(efficiency: &[f64]) -> Result<Self, ObservableError> {
        Self::new(Mat::from_diag(&Array1::from_iter(efficiency.iter().map(|&e| C64::new(e, 0.0)))))
    }

    /// Diagonal detector with unit efficiency on the selected modes.
    pub fn window(mask: &[bool]) -> Self {
        Self {
            matrix: Mat::from_diag(&Array1::from_iter(mask.iter().map(|&m| C64::new(if m { 1.0 } else { 0.0 }, 0.0)))),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    /// Transfers a detector specified on the lab-frame amplitudes to the
    /// frame co-moving with the propagation phases `u`: `D̃ = U† D U`.
    pub fn to_dressed(&self, u: &Array1<C64>) -> Result<Self, ObservableError> {
        let n = self.dim();
        if u.len() != n {
            return Err(ObservableError::DimensionMismatch { expected: n, got: u.len() });
        }
        Ok(Self { matrix: Mat::from_shape_fn((n, n), |(i, j)| u[i].conj() * self.matrix[[i, j]] * u[j]) })
    }
}

/// `⟨N_D⟩ = ½ tr(D [K⁻¹]₁₁) − ½ tr D`, evaluated as `−½ tr(D [K⁻¹(K − 𝟙)]₁₁)`
/// so the vacuum gives exactly zero.
fn gaussian_count(kinv: &Mat, k: &Mat, d: &Mat) -> C64 {
    let n = d.nrows();
    let mut km = k.clone();
    for i in 0..2 * n {
        km[[i, i]] -= C64::new(1.0, 0.0);
    }
    let block = kinv.slice(s![..n, ..]).dot(&km.slice(s![.., ..n]));
    -0.5 * linalg::trace(&d.dot(&block))
}

/// Semi-classical count rate `G0` for the Gaussian state `(A, B)`.
pub fn semiclassical_expectation(a: &Mat, b: &Mat, detector: &DetectorKernel) -> Result<f64, ObservableError> {
    if detector.dim() != a.nrows() {
        return Err(ObservableError::DimensionMismatch { expected: a.nrows(), got: detector.dim() });
    }
    let k = bogoliubov_matrix(a, b);
    let kinv = linalg::hpd_inverse(&k).ok_or(ObservableError::NotPositiveDefinite)?;
    Ok(gaussian_count(&kinv, &k, detector.matrix()).re)
}

/// Total down-converted photon number.
pub fn mean_photon_number(a: &Mat, b: &Mat) -> Result<f64, ObservableError> {
    semiclassical_expectation(a, b, &DetectorKernel::all(a.nrows()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Expectation {
    /// Semi-classical count.
    pub g0: f64,
    /// Second-order correction from pump fluctuations.
    pub g2a: f64,
    pub total: f64,
    /// `g2a / g0`, absent when `g0` vanishes.
    pub relative_correction: Option<f64>,
    /// RMS of the first-order fluctuation of the conditional count.
    pub g1_rms: f64,
    /// Finite-difference step in `ε`.
    pub step: f64,
}

struct Evaluator<'a> {
    state: &'a WignerExponent,
    d: &'a Mat,
    k0: Mat,
    k0inv: Mat,
    // K0 = Q Λ Q†; the columns of `whiten` are Q Λ^{-1/2}.
    whiten: Mat,
    g0: f64,
}

impl<'a> Evaluator<'a> {
    fn new(state: &'a WignerExponent, d: &'a Mat) -> Result<Self, ObservableError> {
        let k0 = bogoliubov_matrix(&state.a0, &state.b0);
        let k0inv = linalg::hpd_inverse(&k0).ok_or(ObservableError::NotPositiveDefinite)?;
        let (lambda, q) = linalg::hermitian_eigen(&k0);
        if lambda.first().is_some_and(|&l| l <= 0.0) {
            return Err(ObservableError::NotPositiveDefinite);
        }
        let whiten = Mat::from_shape_fn(q.dim(), |(i, j)| q[[i, j]] / lambda[j].sqrt());
        let g0 = gaussian_count(&k0inv, &k0, d).re;
        Ok(Self { state, d, k0, k0inv, whiten, g0 })
    }

    fn delta_k(&self, eps: &[C64]) -> Mat {
        let (da, db) = self.state.kernel_increments(eps);
        bogoliubov_matrix(&da, &db)
    }

    fn whitened(&self, dk: &Mat) -> Mat {
        linalg::adjoint(&self.whiten).dot(dk).dot(&self.whiten)
    }

    /// `g(ε) − g(0)` with `g(ε) = √(det K0 / det K(ε)) G(K(ε))`, arranged so
    /// that no O(1) quantities cancel.
    fn increment(&self, eps: &[C64]) -> Result<f64, ObservableError> {
        let dk = self.delta_k(eps);
        let lambda = linalg::hermitian_eigenvalues(&self.whitened(&dk));
        if lambda.iter().any(|&l| l <= -1.0) {
            return Err(ObservableError::NotPositiveDefinite);
        }
        let ratio_m1 = (-0.5 * lambda.iter().map(|l| l.ln_1p()).sum::<f64>()).exp_m1();
        let k = &self.k0 + &dk;
        let kinv = linalg::hpd_inverse(&k).ok_or(ObservableError::NotPositiveDefinite)?;
        let n = self.d.nrows();
        let prod = kinv.slice(s![..n, ..]).dot(&dk).dot(&self.k0inv.slice(s![.., ..n]));
        let dg = -0.5 * linalg::trace(&self.d.dot(&prod)).re;
        Ok(ratio_m1 * (self.g0 + dg) + dg)
    }

    fn unit_norm(&self, p: usize, e: C64) -> f64 {
        let mut eps = vec![C64::new(0.0, 0.0); self.state.n_pump()];
        eps[p] = e;
        linalg::spectral_norm(&self.whitened(&self.delta_k(&eps)))
    }
}

/// Full expectation `G0 + G2a` of a detector in the perturbatively corrected
/// state.
pub fn detector_expectation(state: &WignerExponent, detector: &DetectorKernel) -> Result<Expectation, ObservableError> {
    if detector.dim() != state.n_dc() {
        return Err(ObservableError::DimensionMismatch { expected: state.n_dc(), got: detector.dim() });
    }
    let ev = Evaluator::new(state, detector.matrix())?;
    let np = state.n_pump();
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let worst = (0..np).map(|p| ev.unit_norm(p, one).max(ev.unit_norm(p, i))).fold(0.0, f64::max);
    let h = if worst > 0.0 { (0.25 / worst).min(0.5) } else { 0.5 };
    if worst == 0.0 {
        return Ok(Expectation {
            g0: ev.g0,
            g2a: 0.0,
            total: ev.g0,
            relative_correction: (ev.g0 != 0.0).then_some(0.0),
            g1_rms: 0.0,
            step: h,
        });
    }

    // Per pump mode and direction: (second derivative, first derivative).
    let per_mode: Vec<Result<[(f64, f64); 2], ObservableError>> = (0..np)
        .into_par_iter()
        .map(|p| {
            let mut out = [(0.0, 0.0); 2];
            for (slot, dir) in [one, i].into_iter().enumerate() {
                let at = |t: f64| -> Result<f64, ObservableError> {
                    let mut eps = vec![C64::new(0.0, 0.0); np];
                    eps[p] = dir * t;
                    ev.increment(&eps)
                };
                let (fp, fm) = (at(h)?, at(-h)?);
                let (hp, hm) = (at(0.5 * h)?, at(-0.5 * h)?);
                let second = (4.0 * (hp + hm) / (0.25 * h * h) - (fp + fm) / (h * h)) / 3.0;
                let first = (4.0 * (hp - hm) / h - (fp - fm) / (2.0 * h)) / 3.0;
                out[slot] = (second, first);
            }
            Ok(out)
        })
        .collect();

    let mut g2a = 0.0;
    let mut g1_sq = 0.0;
    for r in per_mode {
        for (second, first) in r? {
            g2a += second / 8.0;
            g1_sq += 0.25 * first * first;
        }
    }
    let total = ev.g0 + g2a;
    Ok(Expectation {
        g0: ev.g0,
        g2a,
        total,
        relative_correction: (ev.g0 != 0.0).then(|| g2a / ev.g0),
        g1_rms: g1_sq.sqrt(),
        step: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiclassical::{thin_crystal, GaussianDCState};
    use proptest::prelude::*;

    fn random_hermitian_contraction(n: usize, v: &[f64]) -> Mat {
        let m = Mat::from_shape_fn((n, n), |(i, j)| C64::new(v[i * n + j], v[n * n + i * n + j]));
        let h = &m + &linalg::adjoint(&m);
        let norm = linalg::spectral_norm(&h).max(1e-12);
        // Map the spectrum into [0, 1].
        &h.mapv(|x| x / (2.0 * norm)) + &linalg::identity(n).mapv(|x| x * 0.5)
    }

    fn multimode_state(n: usize) -> GaussianDCState {
        let h0 = Mat::from_shape_fn((n, n), |(i, j)| {
            let s = (i + j) as f64;
            C64::new(0.3 * (1.3 * s).cos(), 0.2 * (0.7 * s).sin())
        });
        thin_crystal(&h0, 1.0).unwrap()
    }

    #[test]
    fn vacuum_count_is_exactly_zero() {
        let a = linalg::identity(4);
        let b = linalg::zeros(4);
        let d = random_hermitian_contraction(4, &(0..32).map(|k| (k as f64 * 0.37).sin()).collect::<Vec<_>>());
        let det = DetectorKernel::new(d).unwrap();
        assert_eq!(semiclassical_expectation(&a, &b, &det).unwrap(), 0.0);
        assert_eq!(mean_photon_number(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn total_count_of_pure_state_is_half_trace_excess() {
        let s = multimode_state(5);
        let expected: f64 = 0.5 * s.a.diag().iter().map(|x| x.re - 1.0).sum::<f64>();
        let got = mean_photon_number(&s.a, &s.b).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn detector_validation() {
        let mut d = linalg::identity(2);
        d[[0, 1]] = C64::new(0.1, 0.0);
        assert!(matches!(DetectorKernel::new(d), Err(ObservableError::NonHermitianDetector(_))));
        assert!(matches!(DetectorKernel::diagonal(&[0.5, 1.5]), Err(ObservableError::DetectorEfficiency { .. })));
        assert!(DetectorKernel::diagonal(&[0.0, 1.0]).is_ok());
        let det = DetectorKernel::all(3);
        assert!(matches!(
            semiclassical_expectation(&linalg::identity(2), &linalg::zeros(2), &det),
            Err(ObservableError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dressing_a_diagonal_detector_is_a_no_op() {
        let det = DetectorKernel::diagonal(&[0.2, 0.9]).unwrap();
        let u = Array1::from_vec(vec![C64::from_polar(1.0, 0.4), C64::from_polar(1.0, -2.1)]);
        let back = det.to_dressed(&u).unwrap();
        for (x, y) in back.matrix().iter().zip(det.matrix().iter()) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn uncorrected_state_has_no_fluctuation_term() {
        let s = multimode_state(3);
        let zeta = Array1::from_elem(2, C64::new(10.0, 0.0));
        let w = super::super::assemble_state(&s, None, &zeta).unwrap();
        let e = detector_expectation(&w, &DetectorKernel::all(3)).unwrap();
        assert_eq!(e.g2a, 0.0);
        assert_eq!(e.total, e.g0);
    }

    proptest! {
        #[test]
        fn count_is_linear_in_detector(v1 in proptest::collection::vec(-1.0f64..1.0, 32),
                                       v2 in proptest::collection::vec(-1.0f64..1.0, 32)) {
            let s = multimode_state(4);
            let d1 = random_hermitian_contraction(4, &v1).mapv(|x| x * 0.5);
            let d2 = random_hermitian_contraction(4, &v2).mapv(|x| x * 0.5);
            let g = |d: Mat| semiclassical_expectation(&s.a, &s.b, &DetectorKernel::new(d).unwrap()).unwrap();
            let sum = g(&d1 + &d2);
            let parts = g(d1) + g(d2);
            prop_assert!((sum - parts).abs() < 1e-12 * sum.abs().max(1.0));
        }
    }
}
