use super::{check_symmetric, z_symmetrize, GaussianDCState, SolverError};
use crate::crystal::KernelProfile;
use crate::linalg;
use crate::Mat;

/// Highest number of `H` factors in a series term.
pub const MAX_ORDER: usize = 5;

/// Truncated z-ordered series for `A(L)`, `B(L)`: all terms with at most
/// `order` factors of `H`.
///
/// For a z-independent kernel each iterated integral is `Lⁿ/n!` times the
/// symmetrized product. Otherwise the nested integrals are evaluated by
/// cumulative trapezoidal quadrature on `quad_steps` intervals; because the
/// symmetrizer only ever peels the outermost or innermost factor, every term
/// is an interval of the alternating word `H H* H H* H` and obeys
/// `Q_{i..j}(x) = ∫₀ˣ ½[f_i Q_{i+1..j} + Q_{i..j−1} f_j]`.
pub fn solve_series(h: &dyn KernelProfile, order: usize, length: f64, quad_steps: usize) -> Result<GaussianDCState, SolverError> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(SolverError::InvalidOrder { got: order, max: MAX_ORDER });
    }
    if !(length >= 0.0 && length.is_finite()) {
        return Err(SolverError::InvalidLength(length));
    }
    let n = h.dim();
    check_symmetric(&h.at(0.0))?;
    let terms = if h.is_constant() {
        constant_terms(&h.at(0.0), length)?
    } else {
        if quad_steps < 8 {
            return Err(SolverError::TooFewSteps(quad_steps));
        }
        check_symmetric(&h.at(length))?;
        quadrature_terms(h, length, quad_steps)
    };
    let mut a = linalg::identity(n);
    let mut b = linalg::zeros(n);
    for (count, term) in terms.into_iter().enumerate().map(|(k, t)| (k + 1, t)) {
        if count > order {
            break;
        }
        if count % 2 == 1 {
            b = b + term;
        } else {
            a = a + term;
        }
    }
    Ok(GaussianDCState { a, b, z: length })
}

/// Terms with 1..=5 factors: `[B₁, A₂, B₃, A₄, B₅]`.
fn constant_terms(h: &Mat, length: f64) -> Result<Vec<Mat>, SolverError> {
    let hc = linalg::conj(h);
    let fh = |_: f64| h.clone();
    let fc = |_: f64| hc.clone();
    let f: &dyn Fn(f64) -> Mat = &fh;
    let g: &dyn Fn(f64) -> Mat = &fc;
    let words: [Vec<&dyn Fn(f64) -> Mat>; 5] = [
        vec![f],
        vec![g, f],
        vec![f, g, f],
        vec![g, f, g, f],
        vec![f, g, f, g, f],
    ];
    let mut out = Vec::with_capacity(5);
    let mut coeff = 1.0;
    for (k, word) in words.iter().enumerate() {
        coeff *= length / (k + 1) as f64;
        let zs = vec![0.0; word.len()];
        out.push(z_symmetrize(word, &zs)?.mapv(|x| x * coeff));
    }
    Ok(out)
}

fn quadrature_terms(h: &dyn KernelProfile, length: f64, steps: usize) -> Vec<Mat> {
    let dz = length / steps as f64;
    let hs: Vec<Mat> = (0..=steps).map(|k| h.at(k as f64 * dz)).collect();
    let hcs: Vec<Mat> = hs.iter().map(linalg::conj).collect();
    let factor = |i: usize| if i.is_multiple_of(2) { &hs } else { &hcs };
    let n = h.dim();
    let m = MAX_ORDER;

    // q[i][j][k] = Q_{i..j}(z_k)
    let mut q: Vec<Vec<Vec<Mat>>> = vec![vec![Vec::new(); m]; m];
    for len in 1..=m {
        for i in 0..=(m - len) {
            let j = i + len - 1;
            let integrand: Vec<Mat> = (0..=steps)
                .map(|k| {
                    if len == 1 {
                        factor(i)[k].clone()
                    } else {
                        (factor(i)[k].dot(&q[i + 1][j][k]) + q[i][j - 1][k].dot(&factor(j)[k])).mapv(|x| x * 0.5)
                    }
                })
                .collect();
            let mut acc = Vec::with_capacity(steps + 1);
            acc.push(linalg::zeros(n));
            for k in 1..=steps {
                let next = &acc[k - 1] + &(&integrand[k - 1] + &integrand[k]).mapv(|x| x * (0.5 * dz));
                acc.push(next);
            }
            q[i][j] = acc;
        }
    }
    let at_end = |i: usize, j: usize| q[i][j][steps].clone();
    vec![at_end(0, 0), at_end(1, 2), at_end(0, 2), at_end(1, 4), at_end(0, 4)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{ConstantKernel, FnKernel};
    use crate::semiclassical::{solve_ode, OdeOptions};
    use crate::C64;
    use ndarray::Array2;

    #[test]
    fn order_one_is_integral_of_h() {
        let h = ndarray::arr2(&[[C64::new(0.1, 0.3), C64::new(0.2, 0.0)], [C64::new(0.2, 0.0), C64::new(-0.1, 0.2)]]);
        let s = solve_series(&ConstantKernel(h.clone()), 1, 0.7, 0).unwrap();
        assert_eq!(s.a, linalg::identity(2));
        assert!(linalg::max_abs(&(&s.b - &h.mapv(|x| x * 0.7))) < 1e-15);

        let prof = FnKernel { dim: 2, f: move |z: f64| h.mapv(|x| x * z) };
        let s = solve_series(&prof, 1, 1.0, 64).unwrap();
        let expected = prof.at(1.0).mapv(|x| x * 0.5);
        assert!(linalg::max_abs(&(&s.b - &expected)) < 1e-14);
    }

    #[test]
    fn constant_order_five_matches_ode() {
        let g = 0.05;
        let h = Array2::from_elem((1, 1), C64::new(0.0, g));
        let series = solve_series(&ConstantKernel(h.clone()), 5, 1.0, 0).unwrap();
        let ode = solve_ode(&ConstantKernel(h), 1.0, &OdeOptions::with_steps(64)).unwrap();
        let last = ode.last();
        assert!((series.a[[0, 0]] - last.a[[0, 0]]).norm() < 1e-9 * last.a[[0, 0]].norm());
        assert!((series.b[[0, 0]] - last.b[[0, 0]]).norm() < 1e-9 * last.b[[0, 0]].norm());
    }

    #[test]
    fn quadrature_path_agrees_with_ode_for_varying_kernel() {
        let base = ndarray::arr2(&[[C64::new(0.05, 0.1), C64::new(0.03, 0.0)], [C64::new(0.03, 0.0), C64::new(0.0, 0.08)]]);
        let prof = FnKernel { dim: 2, f: move |z: f64| base.mapv(|x| x * C64::from_polar(1.0 + z, 1.5 * z)) };
        let series = solve_series(&prof, 5, 1.0, 2000).unwrap();
        let ode = solve_ode(&prof, 1.0, &OdeOptions::with_steps(200)).unwrap();
        let last = ode.last();
        assert!(linalg::max_abs(&(&series.b - &last.b)) < 1e-6);
        assert!(linalg::max_abs(&(&series.a - &last.a)) < 1e-6);
    }

    #[test]
    fn quadrature_path_reduces_to_constant_path() {
        let h = ndarray::arr2(&[[C64::new(0.1, 0.2), C64::new(0.05, -0.1)], [C64::new(0.05, -0.1), C64::new(0.0, 0.3)]]);
        let hh = h.clone();
        let prof = FnKernel { dim: 2, f: move |_z: f64| hh.clone() };
        let quad = solve_series(&prof, 5, 1.0, 16).unwrap();
        let exact = solve_series(&ConstantKernel(h), 5, 1.0, 0).unwrap();
        // Trapezoid is exact for the linear first integral only; higher terms
        // carry an O(dz²) error.
        assert!(linalg::max_abs(&(&quad.b - &exact.b)) < 1e-3);
        assert!(linalg::max_abs(&(&quad.a - &exact.a)) < 1e-3);
    }

    #[test]
    fn rejects_unsupported_order() {
        let h = ConstantKernel(linalg::zeros(1));
        assert!(matches!(solve_series(&h, 0, 1.0, 0), Err(SolverError::InvalidOrder { .. })));
        assert!(matches!(solve_series(&h, 6, 1.0, 0), Err(SolverError::InvalidOrder { .. })));
    }
}
