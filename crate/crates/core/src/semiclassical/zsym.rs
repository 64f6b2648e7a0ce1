use super::SolverError;
use crate::Mat;

/// z-symmetrized product `𝒵{f₁(z₁) … fₙ(zₙ)}`, evaluated by the recursion
///
/// `𝒵{f₁(z₁)…fₙ(zₙ)} = ½[f₁(z₁) 𝒵{f₂(z₂)…fₙ(zₙ)} + 𝒵{f₁(z₂)…fₙ₋₁(zₙ)} fₙ(z₁)]`.
pub fn z_symmetrize(factors: &[&dyn Fn(f64) -> Mat], zs: &[f64]) -> Result<Mat, SolverError> {
    if factors.is_empty() {
        return Err(SolverError::EmptyProduct);
    }
    if zs.len() != factors.len() {
        return Err(SolverError::DimensionMismatch { expected: factors.len(), got: zs.len() });
    }
    Ok(recurse(factors, zs))
}

fn recurse(f: &[&dyn Fn(f64) -> Mat], zs: &[f64]) -> Mat {
    let n = f.len();
    if n == 1 {
        return f[0](zs[0]);
    }
    let left = f[0](zs[0]).dot(&recurse(&f[1..], &zs[1..]));
    let right = recurse(&f[..n - 1], &zs[1..]).dot(&f[n - 1](zs[0]));
    (left + right).mapv(|x| x * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;
    use ndarray::Array2;

    fn placeholder(seed: u64) -> impl Fn(f64) -> Mat {
        move |z: f64| {
            Array2::from_shape_fn((3, 3), |(i, j)| {
                let s = (seed * 31 + (i * 3 + j) as u64) as f64;
                C64::new((s * 0.7).sin() + z * (s * 0.3).cos(), (s * 1.3).cos() * z * z - 0.2 * z)
            })
        }
    }

    /// Unrolled form: at each level the outermost remaining z is given either
    /// to the leftmost or to the rightmost remaining factor.
    fn unrolled(f: &[&dyn Fn(f64) -> Mat], zs: &[f64]) -> Mat {
        let n = f.len();
        let mut total = Array2::<C64>::zeros((3, 3));
        for mask in 0..(1u32 << (n - 1)) {
            let mut assigned = vec![0.0; n];
            let (mut lo, mut hi) = (0usize, n - 1);
            for (t, &z) in zs.iter().enumerate().take(n - 1) {
                if mask >> t & 1 == 0 {
                    assigned[lo] = z;
                    lo += 1;
                } else {
                    assigned[hi] = z;
                    hi -= 1;
                }
            }
            assigned[lo] = zs[n - 1];
            let mut prod = f[0](assigned[0]);
            for k in 1..n {
                prod = prod.dot(&f[k](assigned[k]));
            }
            total = total + prod;
        }
        total.mapv(|x| x / (1u32 << (n - 1)) as f64)
    }

    #[test]
    fn single_factor_is_unchanged() {
        let f = placeholder(1);
        let got = z_symmetrize(&[&f], &[0.3]).unwrap();
        assert_eq!(got, f(0.3));
    }

    #[test]
    fn two_factors() {
        let (f, g) = (placeholder(1), placeholder(2));
        let got = z_symmetrize(&[&f, &g], &[0.3, 0.8]).unwrap();
        let expected = (f(0.3).dot(&g(0.8)) + f(0.8).dot(&g(0.3))).mapv(|x| x * 0.5);
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn matches_unrolled_expansion() {
        let fs: Vec<_> = (0..4).map(|k| placeholder(k + 5)).collect();
        let refs: Vec<&dyn Fn(f64) -> Mat> = fs.iter().map(|f| f as &dyn Fn(f64) -> Mat).collect();
        let zs = [0.9, 0.55, 0.31, 0.12];
        for n in 1..=4 {
            let got = z_symmetrize(&refs[..n], &zs[..n]).unwrap();
            let oracle = unrolled(&refs[..n], &zs[..n]);
            for (a, b) in got.iter().zip(oracle.iter()) {
                assert!((a - b).norm() < 1e-12, "n = {n}");
            }
        }
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        assert_eq!(z_symmetrize(&[], &[]), Err(SolverError::EmptyProduct));
        let f = placeholder(1);
        assert!(matches!(z_symmetrize(&[&f], &[0.1, 0.2]), Err(SolverError::DimensionMismatch { .. })));
    }
}
