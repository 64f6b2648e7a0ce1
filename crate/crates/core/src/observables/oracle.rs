use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rayon::prelude::*;

use super::{DetectorKernel, ObservableError, ReducedExponent, WignerExponent};
use crate::linalg;
use crate::C64;

/// Largest number of real integration variables the oracle accepts.
pub const MAX_ORACLE_DIMS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Gauss–Hermite nodes per real dimension.
    pub points: usize,
    /// Step of the finite-difference Hessian used to whiten the integrand.
    pub fd_step: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { points: 64, fd_step: 1e-2 }
    }
}

/// Nodes and weights for `∫ e^{−x²} f(x) dx` (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `∫ e^{logW(r)} obs(r) dʳr` by tensor-product Gauss–Hermite quadrature
/// after whitening `logW` with its finite-difference Hessian at `center`.
pub fn phase_space_oracle<L, O>(
    log_density: L,
    observable: O,
    center: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64, ObservableError>
where
    L: Fn(&[f64]) -> f64 + Sync,
    O: Fn(&[f64]) -> f64 + Sync,
{
    let d = center.len();
    if d == 0 || d > MAX_ORACLE_DIMS {
        return Err(ObservableError::OracleDimension { got: d, max: MAX_ORACLE_DIMS });
    }
    let precision = neg_hessian(&log_density, center, spec.fd_step);
    let l = linalg::real_cholesky(&precision).ok_or(ObservableError::SingularCovariance)?;
    let linv = linalg::real_inverse(&l).ok_or(ObservableError::SingularCovariance)?;
    let log_det_l: f64 = (0..d).map(|i| l[[i, i]].ln()).sum();
    let jacobian = (0.5 * d as f64 * 2f64.ln() - log_det_l).exp();
    // r = c + L^{-T} √2 t
    let map = Array2::from_shape_fn((d, d), |(i, j)| std::f64::consts::SQRT_2 * linv[[j, i]]);

    let (nodes, weights) = gauss_hermite(spec.points);
    let n = nodes.len();
    let total = n.pow(d as u32 - 1);
    let partial: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|outer| {
            let mut t = vec![0.0; d];
            let mut r = vec![0.0; d];
            let mut acc = 0.0;
            for flat in 0..total {
                t[0] = nodes[outer];
                let mut w = weights[outer];
                let mut rest = flat;
                for slot in t.iter_mut().skip(1) {
                    let k = rest % n;
                    rest /= n;
                    *slot = nodes[k];
                    w *= weights[k];
                }
                let mut quad = 0.0;
                for i in 0..d {
                    r[i] = center[i] + (0..d).map(|j| map[[i, j]] * t[j]).sum::<f64>();
                }
                for i in 0..d {
                    for j in 0..d {
                        quad += (r[i] - center[i]) * precision[[i, j]] * (r[j] - center[j]);
                    }
                }
                let f = (log_density(&r) + 0.5 * quad).exp() * observable(&r);
                acc += w * f;
            }
            acc
        })
        .collect();
    Ok(jacobian * partial.iter().sum::<f64>())
}

fn neg_hessian<L: Fn(&[f64]) -> f64>(f: &L, c: &[f64], h: f64) -> Array2<f64> {
    let d = c.len();
    let at = |shifts: &[(usize, f64)]| {
        let mut x = c.to_vec();
        for &(i, s) in shifts {
            x[i] += s;
        }
        f(&x)
    };
    let f0 = f(c);
    let mut out = Array2::zeros((d, d));
    for i in 0..d {
        out[[i, i]] = -(at(&[(i, h)]) - 2.0 * f0 + at(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = -(at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)])
                + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

fn split(r: &[f64], n: usize) -> (Vec<C64>, Vec<C64>) {
    let c: Vec<C64> = r.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
    let (a, b) = c.split_at(n);
    (a.to_vec(), b.to_vec())
}

/// Real coordinates `[Re α₁, Im α₁, …, Re β₁, Im β₁, …]` of the joint
/// density peak `(0, ζ)`.
pub fn joint_center(state: &WignerExponent) -> Vec<f64> {
    let mut c = vec![0.0; 2 * state.n_dc()];
    for z in state.zeta.iter() {
        c.push(z.re);
        c.push(z.im);
    }
    c
}

/// `ln` of the normalized joint density in real coordinates.
pub fn joint_log_density(state: &WignerExponent) -> Result<impl Fn(&[f64]) -> f64 + Sync + '_, ObservableError> {
    let n = state.n_dc();
    let norm = state.log_dc_normalization()? + state.n_pump() as f64 * (2.0 / std::f64::consts::PI).ln();
    Ok(move |r: &[f64]| {
        let (alpha, beta) = split(r, n);
        norm + state.evaluate(&alpha, &beta)
    })
}

/// `ln` of the pump-traced density in the real coordinates of `α`.
pub fn reduced_log_density(reduced: &ReducedExponent) -> Result<impl Fn(&[f64]) -> f64 + Sync + '_, ObservableError> {
    let n = reduced.state.n_dc();
    let norm = reduced.state.log_dc_normalization()?;
    Ok(move |r: &[f64]| {
        let (alpha, _) = split(r, n);
        norm + reduced.evaluate(&alpha)
    })
}

/// Weyl symbol `α†Dα − ½ tr D` of the detector count, reading the first
/// `2n` real coordinates.
pub fn count_symbol(detector: &DetectorKernel) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
    let n = detector.dim();
    let d = detector.matrix();
    let half_trace = 0.5 * linalg::trace(d).re;
    move |r: &[f64]| {
        let (alpha, _) = split(&r[..2 * n], n);
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += alpha[i].conj() * d[[i, j]] * alpha[j];
            }
        }
        acc.re - half_trace
    }
}
