use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use pdcsim::observables::{
    assemble_state, count_symbol, covariance_matrix, detector_expectation, gauss_hermite, gaussian_moments,
    joint_center, joint_log_density, phase_space_oracle, reduced_log_density, schmidt_spectrum,
    semiclassical_expectation, symplectic_eigenvalues, DetectorKernel, ObservableError, QuadratureSpec,
    WignerExponent,
};
use pdcsim::perturbative::{solve_corrections, ConstantCoupling};
use pdcsim::semiclassical::{solve_ode, thin_crystal, GaussianDCState, OdeOptions};
use pdcsim::Tensor3;

fn spec(points: usize) -> QuadratureSpec {
    QuadratureSpec { points, ..QuadratureSpec::default() }
}

fn scalar(x: C64) -> Array2<C64> {
    Array2::from_elem((1, 1), x)
}

/// Single dc mode pumped by a single pump mode at gain `g = |H| L`, `L = 1`.
fn corrected_state(gain: f64, zeta: C64, steps: usize) -> WignerExponent {
    let zeta = Array1::from_elem(1, zeta);
    // H = 4i t ζ*; choose t so that |H| = gain.
    let t = Tensor3::from_elem((1, 1, 1), C64::from_polar(gain / (4.0 * zeta[0].norm()), 0.3));
    let coupling = ConstantCoupling::from_vertex(t, &zeta);
    let semi = solve_ode(&coupling, 1.0, &OdeOptions::with_steps(steps)).unwrap();
    let corr = solve_corrections(&coupling, &semi, 1.0, steps).unwrap();
    assemble_state(semi.last(), corr.last(), &zeta).unwrap()
}

#[test]
fn gauss_hermite_integrates_polynomials() {
    let (x, w) = gauss_hermite(20);
    let moment = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
    let sp = std::f64::consts::PI.sqrt();
    assert!((moment(0) - sp).abs() < 1e-13);
    assert!(moment(1).abs() < 1e-13);
    assert!((moment(4) - 0.75 * sp).abs() < 1e-12);
    assert!((moment(10) - 945.0 / 32.0 * sp).abs() < 1e-9);
}

#[test]
fn oracle_rejects_more_than_four_dimensions() {
    let r = phase_space_oracle(|_: &[f64]| 0.0, |_: &[f64]| 1.0, &[0.0; 5], &spec(8));
    assert!(matches!(r, Err(ObservableError::OracleDimension { got: 5, max: 4 })));
}

#[test]
fn vacuum_joint_normalization_and_count() {
    let semi = GaussianDCState::vacuum(1);
    let zeta = Array1::from_elem(1, C64::new(30.0, -5.0));
    let state = assemble_state(&semi, None, &zeta).unwrap();
    let logw = joint_log_density(&state).unwrap();
    let center = joint_center(&state);
    let norm = phase_space_oracle(&logw, |_: &[f64]| 1.0, &center, &spec(64)).unwrap();
    assert!((norm - 1.0).abs() < 1e-10, "norm {norm}");
    let det = DetectorKernel::all(1);
    let n = phase_space_oracle(&logw, count_symbol(&det), &center, &spec(64)).unwrap();
    assert!(n.abs() < 1e-10, "count {n}");
}

#[test]
fn single_mode_count_matches_oracle() {
    for gain in [0.05, 0.2, 1.0] {
        let semi = thin_crystal(&scalar(C64::new(gain, 0.0)), 1.0).unwrap();
        let zeta = Array1::from_elem(1, C64::new(1.0, 0.0));
        let state = assemble_state(&semi, None, &zeta).unwrap();
        let reduced = state.trace_out_pump();
        let logw = reduced_log_density(&reduced).unwrap();
        let det = DetectorKernel::all(1);
        let oracle = phase_space_oracle(&logw, count_symbol(&det), &[0.0, 0.0], &spec(64)).unwrap();
        let g0 = semiclassical_expectation(&semi.a, &semi.b, &det).unwrap();
        assert!((g0 - oracle).abs() < 1e-8 * oracle.abs().max(1e-300), "gain {gain}: {g0} vs {oracle}");
        let closed = (0.5 * gain).sinh().powi(2);
        assert!((g0 - closed).abs() < 1e-12 * closed, "gain {gain}: {g0} vs {closed}");
    }
}

#[test]
fn squeezed_moments_match_oracle() {
    let r: f64 = 0.4;
    let semi = GaussianDCState {
        a: scalar(C64::new((2.0 * r).cosh(), 0.0)),
        b: scalar(C64::from_polar((2.0 * r).sinh(), 0.7)),
        z: 1.0,
    };
    let state = assemble_state(&semi, None, &Array1::from_elem(1, C64::new(1.0, 0.0))).unwrap();
    let reduced = state.trace_out_pump();
    let logw = reduced_log_density(&reduced).unwrap();
    let q = |f: &(dyn Fn(&[f64]) -> f64 + Sync)| phase_space_oracle(&logw, f, &[0.0, 0.0], &spec(64)).unwrap();

    let v = covariance_matrix(&semi.a, &semi.b).unwrap();
    let two = std::f64::consts::SQRT_2;
    let vxx = q(&|r: &[f64]| (two * r[0]).powi(2));
    let vpp = q(&|r: &[f64]| (two * r[1]).powi(2));
    let vxp = q(&|r: &[f64]| 2.0 * r[0] * r[1]);
    assert!((v[[0, 0]] - vxx).abs() < 1e-8);
    assert!((v[[1, 1]] - vpp).abs() < 1e-8);
    assert!((v[[0, 1]] - vxp).abs() < 1e-8);

    let m = gaussian_moments(&semi.a, &semi.b).unwrap();
    let normal = q(&|r: &[f64]| r[0] * r[0] + r[1] * r[1]);
    let anom_re = q(&|r: &[f64]| r[0] * r[0] - r[1] * r[1]);
    let anom_im = q(&|r: &[f64]| 2.0 * r[0] * r[1]);
    assert!((m.normal[[0, 0]].re - normal).abs() < 1e-8);
    assert!((m.anomalous[[0, 0]] - C64::new(anom_re, anom_im)).norm() < 1e-8);
    let nu = symplectic_eigenvalues(&v).unwrap();
    assert!((nu[0] - 0.5).abs() < 1e-12);
}

#[test]
fn symmetric_ordering_floor() {
    let h0 = Array2::from_shape_fn((4, 4), |(i, j)| C64::new(0.4 / (1.0 + (i + j) as f64), 0.1 * (i * j) as f64));
    let h0 = &h0 + &h0.t();
    for length in [0.1, 0.5, 1.0, 2.0] {
        let s = thin_crystal(&h0, length).unwrap();
        let m = gaussian_moments(&s.a, &s.b).unwrap();
        assert!(m.normal.diag().iter().all(|x| x.re >= 0.5 - 1e-10));
    }
}

#[test]
fn corrected_count_matches_joint_oracle() {
    for gain in [0.1, 0.2] {
        let state = corrected_state(gain, C64::from_polar(0.1, 0.3), 400);
        let det = DetectorKernel::all(1);
        let e = detector_expectation(&state, &det).unwrap();
        let logw = joint_log_density(&state).unwrap();
        let center = joint_center(&state);
        let oracle = phase_space_oracle(&logw, count_symbol(&det), &center, &spec(64)).unwrap();
        // A small pump amplitude keeps the correction resolvable at this tolerance.
        assert!(e.g2a.abs() > 2e-4 * e.g0, "correction too small to be tested: {e:?}");
        let err = (e.total - oracle).abs();
        assert!(err < 1e-4 * e.g0, "gain {gain}: G0 + G2a = {} vs oracle {oracle} (G0 {})", e.total, e.g0);
    }
}

#[test]
fn reduced_state_normalization() {
    let state = corrected_state(0.2, C64::from_polar(0.1, 0.3), 400);
    let reduced = state.trace_out_pump();
    assert!(reduced.non_gaussian);
    let logw = reduced_log_density(&reduced).unwrap();
    let norm = phase_space_oracle(&logw, |_: &[f64]| 1.0, &[0.0, 0.0], &spec(64)).unwrap();
    assert!((norm - 1.0).abs() < 1e-4, "norm {norm}");
}

#[test]
fn joint_oracle_self_convergence() {
    let state = corrected_state(0.2, C64::from_polar(0.1, 0.3), 200);
    let det = DetectorKernel::all(1);
    let logw = joint_log_density(&state).unwrap();
    let center = joint_center(&state);
    let coarse = phase_space_oracle(&logw, count_symbol(&det), &center, &spec(32)).unwrap();
    let fine = phase_space_oracle(&logw, count_symbol(&det), &center, &spec(64)).unwrap();
    assert!((coarse - fine).abs() < 1e-4 * fine.abs());
}

#[test]
fn global_pump_phase_leaves_observables_unchanged() {
    let n = 3;
    let np = 2;
    let t = Tensor3::from_shape_fn((n, n, np), |(i, j, p)| {
        let s = (i.min(j) * 3 + i.max(j) * 7 + p * 13) as f64;
        C64::new(0.02 * s.sin(), 0.02 * (1.3 * s).cos())
    });
    let zeta = Array1::from_vec(vec![C64::new(2.0, 0.5), C64::new(-1.0, 1.5)]);
    let det = DetectorKernel::diagonal(&[1.0, 0.5, 0.25]).unwrap();
    let observe = |zeta: &Array1<C64>| {
        let coupling = ConstantCoupling::from_vertex(t.clone(), zeta);
        let semi = solve_ode(&coupling, 1.0, &OdeOptions::with_steps(100)).unwrap();
        let corr = solve_corrections(&coupling, &semi, 1.0, 100).unwrap();
        let state = assemble_state(semi.last(), corr.last(), zeta).unwrap();
        let e = detector_expectation(&state, &det).unwrap();
        let v = covariance_matrix(&state.a0, &state.b0).unwrap();
        (e, symplectic_eigenvalues(&v).unwrap(), schmidt_spectrum(&state.b0))
    };
    let (e0, nu0, s0) = observe(&zeta);
    let (e1, nu1, s1) = observe(&zeta.mapv(|z| z * C64::from_polar(1.0, 1.1)));
    assert!(e0.g2a != 0.0);
    assert!((e0.g0 - e1.g0).abs() < 1e-10 * e0.g0.abs().max(1.0));
    assert!((e0.g2a - e1.g2a).abs() < 1e-10 * e0.g0.abs().max(1.0));
    for (a, b) in nu0.iter().zip(&nu1).chain(s0.iter().zip(&s1)) {
        assert!((a - b).abs() < 1e-10);
    }
}
