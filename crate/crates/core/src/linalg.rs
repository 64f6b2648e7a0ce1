//! Small dense linear-algebra helpers on top of `ndarray`, with `nalgebra`
//! doing the factorizations.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use ndarray::{Array2, Axis};
use num_complex::Complex64 as C64;

use crate::{Mat, Tensor3};

pub fn identity(n: usize) -> Mat {
    Array2::from_diag_elem(n, C64::new(1.0, 0.0))
}

pub fn zeros(n: usize) -> Mat {
    Array2::zeros((n, n))
}

pub fn conj(m: &Mat) -> Mat {
    m.mapv(|x| x.conj())
}

pub fn transpose(m: &Mat) -> Mat {
    m.t().to_owned()
}

pub fn adjoint(m: &Mat) -> Mat {
    m.t().mapv(|x| x.conj())
}

pub fn scale(m: &Mat, s: C64) -> Mat {
    m.mapv(|x| x * s)
}

pub fn trace(m: &Mat) -> C64 {
    m.diag().iter().copied().sum()
}

/// Largest entry-wise modulus.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.norm()))
}

pub fn frobenius(m: &Mat) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frobenius3(t: &Tensor3) -> f64 {
    t.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `max |M - M†|`.
pub fn hermiticity_defect(m: &Mat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

/// `max |M - Mᵀ|`.
pub fn symmetry_defect(m: &Mat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[[i, j]] - m[[j, i]]).norm());
        }
    }
    worst
}

pub fn to_dmatrix(m: &Mat) -> DMatrix<C64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

pub fn from_dmatrix(m: &DMatrix<C64>) -> Mat {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn real_to_dmatrix(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

pub fn inverse(m: &Mat) -> Option<Mat> {
    to_dmatrix(m).try_inverse().map(|inv| from_dmatrix(&inv))
}

/// Log-determinant of a Hermitian positive-definite matrix, `None` when the
/// Cholesky factorization fails.
pub fn hpd_logdet(m: &Mat) -> Option<f64> {
    let chol = Cholesky::new(to_dmatrix(m))?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d.re > 0.0) || d.im.abs() > 1e-12 * d.re {
            return None;
        }
        acc += d.re.ln();
    }
    Some(2.0 * acc)
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn hpd_inverse(m: &Mat) -> Option<Mat> {
    hpd_logdet(m)?;
    let chol = Cholesky::new(to_dmatrix(m))?;
    Some(from_dmatrix(&chol.inverse()))
}

pub fn is_hpd(m: &Mat) -> bool {
    hpd_logdet(m).is_some()
}

/// Singular values, descending.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let svd = to_dmatrix(m).svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn spectral_norm(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &Mat) -> Vec<f64> {
    let eig = SymmetricEigen::new(to_dmatrix(m));
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Eigen-decomposition of a Hermitian matrix: (ascending eigenvalues,
/// eigenvectors as columns).
pub fn hermitian_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let eig = SymmetricEigen::new(to_dmatrix(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Eigen-decomposition of a real symmetric matrix: (ascending eigenvalues,
/// eigenvectors as columns).
pub fn real_symmetric_eigen(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let eig = SymmetricEigen::new(real_to_dmatrix(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Symmetric square root of a real symmetric positive semidefinite matrix.
pub fn real_symmetric_sqrt(m: &Array2<f64>) -> Option<Array2<f64>> {
    let (values, vectors) = real_symmetric_eigen(m);
    if values.iter().any(|&v| v < -1e-12 * values.last().copied().unwrap_or(1.0).abs()) {
        return None;
    }
    let n = m.nrows();
    let sq: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    Some(Array2::from_shape_fn((n, n), |(i, j)| {
        (0..n).map(|k| vectors[[i, k]] * sq[k] * vectors[[j, k]]).sum()
    }))
}

pub fn real_singular_values(m: &Array2<f64>) -> Vec<f64> {
    let svd = real_to_dmatrix(m).svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Lower Cholesky factor of a real symmetric positive-definite matrix.
pub fn real_cholesky(m: &Array2<f64>) -> Option<Array2<f64>> {
    let chol = Cholesky::new(real_to_dmatrix(m))?;
    let l = chol.l();
    Some(Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| l[(i, j)]))
}

pub fn real_inverse(m: &Array2<f64>) -> Option<Array2<f64>> {
    let inv = real_to_dmatrix(m).try_inverse()?;
    Some(Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| inv[(i, j)]))
}

/// Pump slice `p` of a `(dc, dc, pump)` tensor.
pub fn slice(t: &Tensor3, p: usize) -> Mat {
    t.index_axis(Axis(2), p).to_owned()
}

/// Assemble a `(dc, dc, pump)` tensor from its pump slices.
pub fn stack(slices: &[Mat], n: usize) -> Tensor3 {
    let mut out = Tensor3::zeros((n, n, slices.len()));
    for (p, s) in slices.iter().enumerate() {
        out.index_axis_mut(Axis(2), p).assign(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logdet_of_diagonal() {
        let m = Array2::from_diag(&ndarray::arr1(&[C64::new(2.0, 0.0), C64::new(3.0, 0.0)]));
        assert!((hpd_logdet(&m).unwrap() - 6f64.ln()).abs() < 1e-14);
        let neg = Array2::from_diag(&ndarray::arr1(&[C64::new(-2.0, 0.0), C64::new(3.0, 0.0)]));
        assert!(hpd_logdet(&neg).is_none());
    }

    #[test]
    fn singular_values_sorted() {
        let m = Array2::from_diag(&ndarray::arr1(&[C64::new(0.5, 0.0), C64::new(0.0, -3.0)]));
        let s = singular_values(&m);
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn symmetric_sqrt_squares_back() {
        let m = ndarray::arr2(&[[2.0, 0.5], [0.5, 1.0]]);
        let r = real_symmetric_sqrt(&m).unwrap();
        let back = r.dot(&r);
        for (a, b) in back.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
