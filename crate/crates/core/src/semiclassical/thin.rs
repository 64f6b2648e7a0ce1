use super::{check_symmetric, GaussianDCState, SolverError};
use crate::crystal::KernelProfile;
use crate::linalg;
use crate::{Mat, C64};

/// Thin-crystal closed form for `H = iH₀` constant along the crystal:
/// `A = C(Y)`, `B = i L H₀ Sc(Y)` with `Y = L² H₀* H₀`,
/// `C(Y) = Σ Yᵏ/(2k)!` and `Sc(Y) = Σ Yᵏ/(2k+1)!`.
///
/// For real `H₀` these are `cosh(LH₀)` and `i sinh(LH₀)`. Large arguments
/// are handled by scaling and squaring: `C(4Y) = 2C(Y)² − 𝟙`,
/// `Sc(4Y) = Sc(Y) C(Y)`.
pub fn thin_crystal(h0: &Mat, length: f64) -> Result<GaussianDCState, SolverError> {
    if !(length >= 0.0 && length.is_finite()) {
        return Err(SolverError::InvalidLength(length));
    }
    check_symmetric(h0)?;
    let n = h0.nrows();
    let id = linalg::identity(n);

    let mut s = 0;
    let norm = length * linalg::spectral_norm(h0);
    while norm / f64::powi(2.0, s) > 0.5 {
        s += 1;
    }
    let l = length / f64::powi(2.0, s);
    let y = linalg::conj(h0).dot(h0).mapv(|x| x * (l * l));

    let mut c = id.clone();
    let mut sc = id.clone();
    let mut power = id.clone();
    for k in 1..=30 {
        power = power.dot(&y);
        let even = factorial(2 * k);
        let odd = even * (2 * k + 1) as f64;
        let tc = power.mapv(|x| x / even);
        let ts = power.mapv(|x| x / odd);
        let small = linalg::max_abs(&tc) < 1e-18 * linalg::max_abs(&c);
        c = c + tc;
        sc = sc + ts;
        if small {
            break;
        }
    }
    for _ in 0..s {
        let next_sc = sc.dot(&c);
        c = c.dot(&c).mapv(|x| x * 2.0) - &id;
        sc = next_sc;
    }
    let b = h0.dot(&sc).mapv(|x| x * C64::new(0.0, length));
    Ok(GaussianDCState { a: c, b, z: length })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Thin-crystal form for a profile, after checking that `H` does not vary
/// over `[0, L]` beyond `tol · ‖H(0)‖`.
pub fn thin_crystal_from_profile(h: &dyn KernelProfile, length: f64, tol: f64) -> Result<GaussianDCState, SolverError> {
    let start = h.at(0.0);
    let scale = linalg::frobenius(&start);
    let mut worst = 0.0_f64;
    for k in 1..=8 {
        let z = length * k as f64 / 8.0;
        worst = worst.max(linalg::frobenius(&(&h.at(z) - &start)));
    }
    if worst > tol * scale {
        return Err(SolverError::ZDependent { variation: worst / scale.max(f64::MIN_POSITIVE), tol });
    }
    let h0 = start.mapv(|x| x * C64::new(0.0, -1.0));
    thin_crystal(&h0, length)
}
