use ndarray::Zip;

use super::{check_symmetric, purity_residual, GaussianDCState, SolverError};
use crate::crystal::KernelProfile;
use crate::linalg;
use crate::{Mat, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub steps: usize,
    /// Bound on `max |A - A†|` and `max |B - Bᵀ|` at every step.
    pub structure_tol: f64,
    /// Bound on the Bogoliubov residual at every step.
    pub purity_tol: f64,
    /// Repeat the integration with half the step and report the Richardson
    /// error estimate.
    pub self_check: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { steps: 200, structure_tol: 1e-10, purity_tol: 1e-8, self_check: true }
    }
}

impl OdeOptions {
    pub fn with_steps(steps: usize) -> Self {
        Self { steps, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct OdeDiagnostics {
    pub steps: usize,
    pub max_hermiticity_defect: f64,
    pub max_symmetry_defect: f64,
    pub max_purity_residual: f64,
    /// Richardson estimate `16 max |X_N − X_2N| / 15` of the error in the
    /// returned final A and B, when self-checked.
    pub richardson_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    /// States at `z_k = k L / steps`, `k = 0..=steps`.
    pub states: Vec<GaussianDCState>,
    pub diagnostics: OdeDiagnostics,
}

impl OdeSolution {
    pub fn last(&self) -> &GaussianDCState {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Right-hand side for `(E = A − 𝟙, B)`:
/// `∂E = ½H*B + ½B*H`, `∂B = H + ½HE + ½EᵀH`.
pub fn rhs(h: &Mat, hc: &Mat, e: &Mat, b: &Mat) -> (Mat, Mat) {
    let bc = linalg::conj(b);
    let de = (hc.dot(b) + bc.dot(h)).mapv(|x| x * 0.5);
    let db = h + &(h.dot(e) + e.t().dot(h)).mapv(|x| x * 0.5);
    (de, db)
}

pub(crate) fn rk4_stage(y: &Mat, k: &Mat, c: f64) -> Mat {
    let mut out = y.clone();
    Zip::from(&mut out).and(k).for_each(|o, &k| *o += k * c);
    out
}

pub(crate) fn rk4_combine(y: &Mat, k1: &Mat, k2: &Mat, k3: &Mat, k4: &Mat, dz: f64) -> Mat {
    let mut out = y.clone();
    let s = dz / 6.0;
    Zip::from(&mut out)
        .and(k1)
        .and(k2)
        .and(k3)
        .and(k4)
        .for_each(|o, &a, &b, &c, &d| *o += (a + (b + c) * 2.0 + d) * s);
    out
}

fn validate(h: &dyn KernelProfile, length: f64, steps: usize) -> Result<(), SolverError> {
    if steps < 8 {
        return Err(SolverError::TooFewSteps(steps));
    }
    if !(length >= 0.0 && length.is_finite()) {
        return Err(SolverError::InvalidLength(length));
    }
    for z in [0.0, length] {
        let m = h.at(z);
        if m.dim() != (h.dim(), h.dim()) {
            return Err(SolverError::DimensionMismatch { expected: h.dim(), got: m.nrows() });
        }
        check_symmetric(&m)?;
    }
    Ok(())
}

fn integrate(h: &dyn KernelProfile, length: f64, opts: &OdeOptions, steps: usize) -> Result<OdeSolution, SolverError> {
    let n = h.dim();
    let dz = length / steps as f64;
    let mut e = linalg::zeros(n);
    let mut b = linalg::zeros(n);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(GaussianDCState::vacuum(n));
    let mut diag = OdeDiagnostics { steps, ..Default::default() };
    let one = C64::new(1.0, 0.0);

    for k in 0..steps {
        let z = k as f64 * dz;
        let h0 = h.at(z);
        let hm = h.at(z + 0.5 * dz);
        let h1 = h.at(z + dz);
        let (h0c, hmc, h1c) = (linalg::conj(&h0), linalg::conj(&hm), linalg::conj(&h1));

        let (ke1, kb1) = rhs(&h0, &h0c, &e, &b);
        let (ke2, kb2) = rhs(&hm, &hmc, &rk4_stage(&e, &ke1, 0.5 * dz), &rk4_stage(&b, &kb1, 0.5 * dz));
        let (ke3, kb3) = rhs(&hm, &hmc, &rk4_stage(&e, &ke2, 0.5 * dz), &rk4_stage(&b, &kb2, 0.5 * dz));
        let (ke4, kb4) = rhs(&h1, &h1c, &rk4_stage(&e, &ke3, dz), &rk4_stage(&b, &kb3, dz));
        e = rk4_combine(&e, &ke1, &ke2, &ke3, &ke4, dz);
        b = rk4_combine(&b, &kb1, &kb2, &kb3, &kb4, dz);

        let mut a = e.clone();
        a.diag_mut().mapv_inplace(|x| x + one);
        let step = k + 1;
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(SolverError::InvariantViolation { step, quantity: "non-finite kernel entry", value: f64::INFINITY, tol: 0.0 });
        }
        let herm = linalg::hermiticity_defect(&a);
        let sym = linalg::symmetry_defect(&b);
        let pur = purity_residual(&a, &b);
        for (quantity, value, tol) in [
            ("max |A - A†|", herm, opts.structure_tol),
            ("max |B - Bᵀ|", sym, opts.structure_tol),
            ("Bogoliubov residual", pur, opts.purity_tol),
        ] {
            if value > tol {
                return Err(SolverError::InvariantViolation { step, quantity, value, tol });
            }
        }
        diag.max_hermiticity_defect = diag.max_hermiticity_defect.max(herm);
        diag.max_symmetry_defect = diag.max_symmetry_defect.max(sym);
        diag.max_purity_residual = diag.max_purity_residual.max(pur);
        states.push(GaussianDCState { a, b: b.clone(), z: z + dz });
    }
    Ok(OdeSolution { states, diagnostics: diag })
}

/// Fixed-step classical Runge–Kutta integration from the vacuum.
pub fn solve_ode(h: &dyn KernelProfile, length: f64, opts: &OdeOptions) -> Result<OdeSolution, SolverError> {
    validate(h, length, opts.steps)?;
    let mut sol = integrate(h, length, opts, opts.steps)?;
    if opts.self_check {
        let fine = integrate(h, length, opts, 2 * opts.steps)?;
        let (c, f) = (sol.last(), fine.last());
        let err = linalg::max_abs(&(&c.a - &f.a)).max(linalg::max_abs(&(&c.b - &f.b))) * 16.0 / 15.0;
        sol.diagnostics.richardson_error = Some(err);
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{ConstantKernel, FnKernel};
    use ndarray::Array2;

    fn scalar(h: C64) -> ConstantKernel {
        ConstantKernel(Array2::from_elem((1, 1), h))
    }

    #[test]
    fn zero_kernel_keeps_vacuum() {
        let sol = solve_ode(&ConstantKernel(linalg::zeros(3)), 1.0, &OdeOptions::with_steps(16)).unwrap();
        for s in &sol.states {
            assert_eq!(s.a, linalg::identity(3));
            assert_eq!(s.b, linalg::zeros(3));
        }
    }

    #[test]
    fn single_mode_matches_hyperbolic_closed_form() {
        let h: f64 = 0.2;
        let sol = solve_ode(&scalar(C64::new(0.0, h)), 1.0, &OdeOptions::with_steps(64)).unwrap();
        let last = sol.last();
        assert!((last.a[[0, 0]] - C64::new(h.cosh(), 0.0)).norm() < 1e-8);
        assert!((last.b[[0, 0]] - C64::new(0.0, h.sinh())).norm() < 1e-8);
        for s in &sol.states {
            let r = s.a[[0, 0]].norm_sqr() - s.b[[0, 0]].norm_sqr() - 1.0;
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let h: f64 = 1.5;
        let exact = C64::new(h.cosh(), 0.0);
        let err = |steps| {
            let opts = OdeOptions { self_check: false, purity_tol: 1e-2, ..OdeOptions::with_steps(steps) };
            let sol = solve_ode(&scalar(C64::new(0.0, h)), 1.0, &opts).unwrap();
            (sol.last().a[[0, 0]] - exact).norm()
        };
        let ratio = err(10) / err(20);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn richardson_estimate_tracks_true_error() {
        let h: f64 = 1.0;
        let opts = OdeOptions { purity_tol: 1e-4, ..OdeOptions::with_steps(16) };
        let sol = solve_ode(&scalar(C64::new(0.0, h)), 1.0, &opts).unwrap();
        let true_err = (sol.last().a[[0, 0]] - C64::new(h.cosh(), 0.0)).norm()
            .max((sol.last().b[[0, 0]] - C64::new(0.0, h.sinh())).norm());
        let est = sol.diagnostics.richardson_error.unwrap();
        assert!(est > 0.3 * true_err && est < 3.0 * true_err, "est {est} true {true_err}");
    }

    #[test]
    fn rejects_bad_input() {
        let h = scalar(C64::new(0.0, 1.0));
        assert_eq!(solve_ode(&h, 1.0, &OdeOptions::with_steps(4)).unwrap_err(), SolverError::TooFewSteps(4));
        let ns = ConstantKernel(ndarray::arr2(&[[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], [C64::new(0.0, 0.0), C64::new(0.0, 0.0)]]));
        assert!(matches!(solve_ode(&ns, 1.0, &OdeOptions::with_steps(8)), Err(SolverError::NonSymmetricKernel(_))));
    }

    #[test]
    fn coarse_steps_abort_with_step_index() {
        let h = scalar(C64::new(0.0, 40.0));
        let err = solve_ode(&h, 1.0, &OdeOptions::with_steps(8)).unwrap_err();
        assert!(matches!(err, SolverError::InvariantViolation { step: 1, .. }), "{err:?}");
    }

    #[test]
    fn z_dependent_kernel_keeps_structure() {
        let base = ndarray::arr2(&[
            [C64::new(0.3, 0.4), C64::new(-0.2, 0.1)],
            [C64::new(-0.2, 0.1), C64::new(0.1, -0.5)],
        ]);
        let prof = FnKernel { dim: 2, f: move |z: f64| base.mapv(|x| x * C64::from_polar(1.0, 2.0 * z)) };
        let sol = solve_ode(&prof, 1.0, &OdeOptions::with_steps(100)).unwrap();
        assert!(sol.diagnostics.max_purity_residual < 1e-10);
        assert!(sol.diagnostics.max_hermiticity_defect < 1e-12);
    }
}
