use ndarray::{s, Array1, Array2};
use serde::Serialize;

use super::ObservableError;
use crate::linalg;
use crate::{Mat, C64};

/// `K = [[A, B*], [B, A*]]`; the Gaussian exponent is `−ξ†Kξ` with
/// `ξ = (α, α*)`.
pub fn bogoliubov_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let mut k = Mat::zeros((2 * n, 2 * n));
    k.slice_mut(s![..n, ..n]).assign(a);
    k.slice_mut(s![..n, n..]).assign(&linalg::conj(b));
    k.slice_mut(s![n.., ..n]).assign(b);
    k.slice_mut(s![n.., n..]).assign(&linalg::conj(a));
    k
}

/// Symmetric-ordered moments of the Gaussian `exp(−2α†Aα − αᵀBα − α†B*α*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub mean: Array1<C64>,
    /// `⟨α_i* α_j⟩`.
    pub normal: Mat,
    /// `⟨α_i α_j⟩`.
    pub anomalous: Mat,
}

/// With `W ∝ exp(−½ξ†Mξ)`, `M = 2K`, the covariance is `⟨ξξ†⟩ = M⁻¹`.
pub fn gaussian_moments(a: &Mat, b: &Mat) -> Result<MomentSet, ObservableError> {
    let n = a.nrows();
    let kinv = linalg::hpd_inverse(&bogoliubov_matrix(a, b)).ok_or(ObservableError::NotPositiveDefinite)?;
    let half = |m: Mat| m.mapv(|x| x * 0.5);
    Ok(MomentSet {
        mean: Array1::zeros(n),
        normal: half(kinv.slice(s![..n, ..n]).t().to_owned()),
        anomalous: half(kinv.slice(s![..n, n..]).to_owned()),
    })
}

/// Real covariance of `r = (x₁…xₙ, p₁…pₙ)` with `α = (x + ip)/√2`; the
/// vacuum gives `½𝟙`.
pub fn covariance_matrix(a: &Mat, b: &Mat) -> Result<Array2<f64>, ObservableError> {
    let n = a.nrows();
    let kinv = linalg::hpd_inverse(&bogoliubov_matrix(a, b)).ok_or(ObservableError::NotPositiveDefinite)?;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut t = Mat::zeros((2 * n, 2 * n));
    for i in 0..n {
        t[[i, i]] = C64::new(r, 0.0);
        t[[i, n + i]] = C64::new(0.0, r);
        t[[n + i, i]] = C64::new(r, 0.0);
        t[[n + i, n + i]] = C64::new(0.0, -r);
    }
    let v = linalg::adjoint(&t).dot(&kinv.mapv(|x| x * 0.5)).dot(&t);
    let mut out = v.mapv(|x| x.re);
    // Remove round-off asymmetry.
    for i in 0..2 * n {
        for j in (i + 1)..2 * n {
            let m = 0.5 * (out[[i, j]] + out[[j, i]]);
            out[[i, j]] = m;
            out[[j, i]] = m;
        }
    }
    Ok(out)
}

/// Symplectic eigenvalues (ascending, one per mode) from the singular values
/// of `V^{1/2} Ω V^{1/2}`.
pub fn symplectic_eigenvalues(v: &Array2<f64>) -> Result<Vec<f64>, ObservableError> {
    let m = v.nrows() / 2;
    let root = linalg::real_symmetric_sqrt(v).ok_or(ObservableError::SingularCovariance)?;
    let mut omega = Array2::<f64>::zeros((2 * m, 2 * m));
    for i in 0..m {
        omega[[i, m + i]] = 1.0;
        omega[[m + i, i]] = -1.0;
    }
    let mut sv = linalg::real_singular_values(&root.dot(&omega).dot(&root));
    sv.sort_by(|a, b| a.total_cmp(b));
    Ok(sv.into_iter().step_by(2).collect())
}

/// `1 / (2ⁿ √det V)`; 1 for pure states.
pub fn purity(v: &Array2<f64>) -> Result<f64, ObservableError> {
    let n = v.nrows() / 2;
    let l = linalg::real_cholesky(v).ok_or(ObservableError::SingularCovariance)?;
    let logdet: f64 = 2.0 * (0..2 * n).map(|i| l[[i, i]].ln()).sum::<f64>();
    Ok((-(n as f64) * 2f64.ln() - 0.5 * logdet).exp())
}

/// Singular values of `B̂`, descending.
pub fn schmidt_spectrum(b: &Mat) -> Vec<f64> {
    linalg::singular_values(b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceSummary {
    pub symplectic_min: f64,
    pub symplectic_max: f64,
    pub purity: f64,
    pub min_quadrature_variance: f64,
    pub max_quadrature_variance: f64,
}

pub fn covariance_summary(a: &Mat, b: &Mat) -> Result<CovarianceSummary, ObservableError> {
    let v = covariance_matrix(a, b)?;
    let nu = symplectic_eigenvalues(&v)?;
    let (ev, _) = linalg::real_symmetric_eigen(&v);
    Ok(CovarianceSummary {
        symplectic_min: nu.first().copied().unwrap_or(0.5),
        symplectic_max: nu.last().copied().unwrap_or(0.5),
        purity: purity(&v)?,
        min_quadrature_variance: ev.first().copied().unwrap_or(0.5),
        max_quadrature_variance: ev.last().copied().unwrap_or(0.5),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiclassical::thin_crystal;

    #[test]
    fn vacuum_covariance() {
        let a = linalg::identity(3);
        let b = linalg::zeros(3);
        let v = covariance_matrix(&a, &b).unwrap();
        for ((i, j), x) in v.indexed_iter() {
            assert!((x - if i == j { 0.5 } else { 0.0 }).abs() < 1e-15);
        }
        for nu in symplectic_eigenvalues(&v).unwrap() {
            assert!((nu - 0.5).abs() < 1e-14);
        }
        assert!((purity(&v).unwrap() - 1.0).abs() < 1e-14);
        let m = gaussian_moments(&a, &b).unwrap();
        assert!(m.normal.diag().iter().all(|x| (x.re - 0.5).abs() < 1e-15));
    }

    #[test]
    fn single_mode_squeezed_variances() {
        let r: f64 = 0.3;
        let a = Array2::from_elem((1, 1), C64::new((2.0 * r).cosh(), 0.0));
        let b = Array2::from_elem((1, 1), C64::new((2.0 * r).sinh(), 0.0));
        let v = covariance_matrix(&a, &b).unwrap();
        assert!((v[[0, 0]] - 0.5 * (-2.0 * r).exp()).abs() < 1e-14);
        assert!((v[[1, 1]] - 0.5 * (2.0 * r).exp()).abs() < 1e-14);
        assert!(v[[0, 1]].abs() < 1e-15);
    }

    #[test]
    fn multimode_state_is_pure() {
        let h0 = Array2::from_shape_fn((4, 4), |(i, j)| {
            let t = (i.min(j) * 3 + i.max(j)) as f64;
            C64::new(0.3 * t.sin(), 0.2 * t.cos())
        });
        let s = thin_crystal(&h0, 1.0).unwrap();
        let v = covariance_matrix(&s.a, &s.b).unwrap();
        for nu in symplectic_eigenvalues(&v).unwrap() {
            assert!((nu - 0.5).abs() < 1e-12);
        }
        assert!((purity(&v).unwrap() - 1.0).abs() < 1e-12);
        let m = gaussian_moments(&s.a, &s.b).unwrap();
        assert!(m.normal.diag().iter().all(|x| x.re >= 0.5 - 1e-12));
    }

    #[test]
    fn not_positive_definite_rejected() {
        let a = Array2::from_elem((1, 1), C64::new(-1.0, 0.0));
        assert_eq!(covariance_matrix(&a, &linalg::zeros(1)), Err(ObservableError::NotPositiveDefinite));
    }

    #[test]
    fn schmidt_examples() {
        assert!(schmidt_spectrum(&linalg::zeros(3)).iter().all(|&x| x == 0.0));
        let one = Array2::from_elem((1, 1), C64::new(0.0, -0.7));
        assert!((schmidt_spectrum(&one)[0] - 0.7).abs() < 1e-15);
        let v = [C64::new(0.3, 0.1), C64::new(-0.5, 0.2), C64::new(0.1, 0.0)];
        let bcoef = C64::new(0.4, -0.9);
        let rank1 = Array2::from_shape_fn((3, 3), |(i, j)| bcoef * v[i] * v[j]);
        let s = schmidt_spectrum(&rank1);
        let vnorm2: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        assert!((s[0] - bcoef.norm() * vnorm2).abs() < 1e-14);
        assert!(s[1].abs() < 1e-14 && s[2].abs() < 1e-14);
    }
}
