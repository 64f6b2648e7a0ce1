//! First-order corrections beyond the frozen pump: the kernels `A1`, `B1`,
//! `B2` that couple the down-converted state to the pump deviation `ε`, their
//! leading-order closed integrals, pump depletion and the obstruction residual.
//!
//! Three-index kernels are stored as `(dc, dc, pump)` arrays; every pump slice
//! evolves independently.

use ndarray::{Array1, Axis};
use rayon::prelude::*;
use thiserror::Error;

use crate::crystal::{KernelProfile, PumpedVertex};
use crate::linalg;
use crate::semiclassical::{rhs, rk4_combine, rk4_stage, GaussianDCState, OdeSolution};
use crate::{Mat, Tensor3, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbativeError {
    #[error("semi-classical trajectory has {got} states, expected {expected} (steps + 1)")]
    StepMismatch { expected: usize, got: usize },

    #[error("semi-classical trajectory ends at z = {got}, expected {expected}")]
    LengthMismatch { expected: f64, got: f64 },

    #[error("semi-classical trajectory was computed with a different kernel (deviation {deviation:e} at step {step})")]
    TrajectoryMismatch { step: usize, deviation: f64 },

    #[error("kernel dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("at least 8 integration steps are required (got {0})")]
    TooFewSteps(usize),
}

/// Bilinear kernel together with the dressed vertex it was built from.
pub trait Coupling: KernelProfile {
    fn n_pump(&self) -> usize;
    /// Dressed vertex `T̃(z)`.
    fn dressed(&self, z: f64) -> Tensor3;
    /// Source `S(z) = 2i T̃*(z)`.
    fn source(&self, z: f64) -> Tensor3 {
        self.dressed(z).mapv(|x| C64::new(0.0, 2.0) * x.conj())
    }
}

impl Coupling for PumpedVertex {
    fn n_pump(&self) -> usize {
        PumpedVertex::n_pump(self)
    }
    fn dressed(&self, z: f64) -> Tensor3 {
        PumpedVertex::dressed(self, z)
    }
}

/// z-independent `H` and `T̃`, set independently of each other.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantCoupling {
    pub h: Mat,
    pub t: Tensor3,
}

impl ConstantCoupling {
    /// `H = 4i Σ_p T̃_p ζ̂*_p`.
    pub fn from_vertex(t: Tensor3, zeta: &Array1<C64>) -> Self {
        let h = crate::crystal::bilinear_h(&t, zeta).expect("pump length matches vertex");
        Self { h, t }
    }
}

impl KernelProfile for ConstantCoupling {
    fn dim(&self) -> usize {
        self.h.nrows()
    }
    fn at(&self, _z: f64) -> Mat {
        self.h.clone()
    }
    fn is_constant(&self) -> bool {
        true
    }
}

impl Coupling for ConstantCoupling {
    fn n_pump(&self) -> usize {
        self.t.dim().2
    }
    fn dressed(&self, _z: f64) -> Tensor3 {
        self.t.clone()
    }
}

/// Wraps a coupling so that it no longer reports itself as constant; used to
/// force quadrature paths.
pub struct Tabulated<'a>(pub &'a dyn Coupling);

impl KernelProfile for Tabulated<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn at(&self, z: f64) -> Mat {
        self.0.at(z)
    }
}

impl Coupling for Tabulated<'_> {
    fn n_pump(&self) -> usize {
        self.0.n_pump()
    }
    fn dressed(&self, z: f64) -> Tensor3 {
        self.0.dressed(z)
    }
    fn source(&self, z: f64) -> Tensor3 {
        self.0.source(z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionKernels {
    pub a1: Tensor3,
    pub b1: Tensor3,
    pub b2: Tensor3,
    pub z: f64,
}

impl CorrectionKernels {
    pub fn zero(n: usize, np: usize, z: f64) -> Self {
        let zero = Tensor3::zeros((n, n, np));
        Self { a1: zero.clone(), b1: zero.clone(), b2: zero, z }
    }

    pub fn norms(&self) -> [f64; 3] {
        [linalg::frobenius3(&self.a1), linalg::frobenius3(&self.b1), linalg::frobenius3(&self.b2)]
    }

    /// Global pump phase `ζ → e^{iφ}ζ` acts as `A1 → e^{−iφ}A1`,
    /// `B1 → e^{−2iφ}B1`, `B2 → B2`.
    pub fn rotate_pump_phase(&self, phi: f64) -> Self {
        let r1 = C64::from_polar(1.0, -phi);
        let r2 = C64::from_polar(1.0, -2.0 * phi);
        Self { a1: self.a1.mapv(|x| x * r1), b1: self.b1.mapv(|x| x * r2), b2: self.b2.clone(), z: self.z }
    }
}

type Slice3 = (Mat, Mat, Mat);

fn correction_rhs(h: &Mat, hc: &Mat, e0: &Mat, b0: &Mat, s: &Mat, y: &Slice3) -> Slice3 {
    let (a1, b1, b2) = y;
    let half = |m: Mat| m.mapv(|x| x * 0.5);
    let da1 = half(hc.dot(b1) + b2.dot(h)) + e0.dot(s).dot(b0);
    let db1 = half(h.dot(a1) + a1.t().dot(h)) + b0.dot(s).dot(b0);
    let db2 = half(hc.dot(&a1.t()) + a1.dot(hc)) + e0.dot(s).dot(&e0.t());
    (da1, db1, db2)
}

fn stage3(y: &Slice3, k: &Slice3, c: f64) -> Slice3 {
    (rk4_stage(&y.0, &k.0, c), rk4_stage(&y.1, &k.1, c), rk4_stage(&y.2, &k.2, c))
}

/// Integrates the correction equations alongside `(E0, B0)` with the same
/// Runge–Kutta stages as the semi-classical solver, checking that the
/// recomputed `(A0, B0)` reproduce `semi` step by step.
pub fn solve_corrections(
    coupling: &dyn Coupling,
    semi: &OdeSolution,
    length: f64,
    steps: usize,
) -> Result<Vec<CorrectionKernels>, PerturbativeError> {
    if steps < 8 {
        return Err(PerturbativeError::TooFewSteps(steps));
    }
    if semi.states.len() != steps + 1 {
        return Err(PerturbativeError::StepMismatch { expected: steps + 1, got: semi.states.len() });
    }
    let end = semi.states[steps].z;
    if (end - length).abs() > 1e-12 * length.abs().max(1.0) {
        return Err(PerturbativeError::LengthMismatch { expected: length, got: end });
    }
    let n = coupling.dim();
    if semi.states[0].dim() != n {
        return Err(PerturbativeError::DimensionMismatch { expected: n, got: semi.states[0].dim() });
    }
    let np = coupling.n_pump();
    let dz = length / steps as f64;

    let mut e = linalg::zeros(n);
    let mut b = linalg::zeros(n);
    let mut slices: Vec<Slice3> = vec![(linalg::zeros(n), linalg::zeros(n), linalg::zeros(n)); np];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(CorrectionKernels::zero(n, np, 0.0));

    for k in 0..steps {
        let z = k as f64 * dz;
        let h0 = coupling.at(z);
        let hm = coupling.at(z + 0.5 * dz);
        let h1 = coupling.at(z + dz);
        let (h0c, hmc, h1c) = (linalg::conj(&h0), linalg::conj(&hm), linalg::conj(&h1));
        let s0 = coupling.source(z);
        let sm = coupling.source(z + 0.5 * dz);
        let s1 = coupling.source(z + dz);

        let (ke1, kb1) = rhs(&h0, &h0c, &e, &b);
        let (e2, b2) = (rk4_stage(&e, &ke1, 0.5 * dz), rk4_stage(&b, &kb1, 0.5 * dz));
        let (ke2, kb2) = rhs(&hm, &hmc, &e2, &b2);
        let (e3, b3) = (rk4_stage(&e, &ke2, 0.5 * dz), rk4_stage(&b, &kb2, 0.5 * dz));
        let (ke3, kb3) = rhs(&hm, &hmc, &e3, &b3);
        let (e4, b4) = (rk4_stage(&e, &ke3, dz), rk4_stage(&b, &kb3, dz));
        let (ke4, kb4) = rhs(&h1, &h1c, &e4, &b4);

        slices = slices
            .par_iter()
            .enumerate()
            .map(|(p, y)| {
                let sp0 = s0.index_axis(Axis(2), p).to_owned();
                let spm = sm.index_axis(Axis(2), p).to_owned();
                let sp1 = s1.index_axis(Axis(2), p).to_owned();
                let k1 = correction_rhs(&h0, &h0c, &e, &b, &sp0, y);
                let k2 = correction_rhs(&hm, &hmc, &e2, &b2, &spm, &stage3(y, &k1, 0.5 * dz));
                let k3 = correction_rhs(&hm, &hmc, &e3, &b3, &spm, &stage3(y, &k2, 0.5 * dz));
                let k4 = correction_rhs(&h1, &h1c, &e4, &b4, &sp1, &stage3(y, &k3, dz));
                (
                    rk4_combine(&y.0, &k1.0, &k2.0, &k3.0, &k4.0, dz),
                    rk4_combine(&y.1, &k1.1, &k2.1, &k3.1, &k4.1, dz),
                    rk4_combine(&y.2, &k1.2, &k2.2, &k3.2, &k4.2, dz),
                )
            })
            .collect();

        e = rk4_combine(&e, &ke1, &ke2, &ke3, &ke4, dz);
        b = rk4_combine(&b, &kb1, &kb2, &kb3, &kb4, dz);

        let given = &semi.states[k + 1];
        let ea = &given.a - &linalg::identity(n);
        let deviation = linalg::max_abs(&(&ea - &e)).max(linalg::max_abs(&(&given.b - &b)));
        let scale = 1.0 + linalg::max_abs(&given.a).max(linalg::max_abs(&given.b));
        if deviation > 1e-12 * scale {
            return Err(PerturbativeError::TrajectoryMismatch { step: k + 1, deviation });
        }

        let a1: Vec<Mat> = slices.iter().map(|s| s.0.clone()).collect();
        let b1: Vec<Mat> = slices.iter().map(|s| s.1.clone()).collect();
        let b2: Vec<Mat> = slices.iter().map(|s| s.2.clone()).collect();
        out.push(CorrectionKernels {
            a1: linalg::stack(&a1, n),
            b1: linalg::stack(&b1, n),
            b2: linalg::stack(&b2, n),
            z: z + dz,
        });
    }
    Ok(out)
}

/// Which closed form to use for the leading-order corrections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeadingForm {
    /// The three nested integrals exactly as they are usually quoted: source
    /// terms only.
    Printed,
    /// Adds the same-order homogeneous feedback `½∫H*B1` to `A1` and
    /// `½∫(H*A1ᵀ + A1H*)` to `B2`, which the source-only integrals omit.
    Complete,
}

/// Leading-order corrections at `z = length`.
///
/// Constant kernels use the closed polynomial factors (`B1 = L³/3 HSH`,
/// `A1 = L⁴/8 H*HSH` or `L⁴/6` with feedback, `B2 = L⁵/20 H*HSHH*` or
/// `L⁵/12`). Otherwise the nested integrals are accumulated by trapezoid on
/// `quad_steps` intervals.
pub fn leading_order_corrections(
    coupling: &dyn Coupling,
    length: f64,
    quad_steps: usize,
    form: LeadingForm,
) -> Result<CorrectionKernels, PerturbativeError> {
    let n = coupling.dim();
    let np = coupling.n_pump();
    if coupling.is_constant() {
        let h = coupling.at(0.0);
        let hc = linalg::conj(&h);
        let s = coupling.source(0.0);
        let l = length;
        let (ca, cb2) = match form {
            LeadingForm::Printed => (1.0 / 8.0, 1.0 / 20.0),
            LeadingForm::Complete => (1.0 / 6.0, 1.0 / 12.0),
        };
        let hch = hc.dot(&h);
        let hhc = h.dot(&hc);
        let mut out = CorrectionKernels::zero(n, np, length);
        for p in 0..np {
            let sp = linalg::slice(&s, p);
            let hsh = h.dot(&sp).dot(&h);
            out.b1.index_axis_mut(Axis(2), p).assign(&hsh.mapv(|x| x * (l.powi(3) / 3.0)));
            out.a1.index_axis_mut(Axis(2), p).assign(&hc.dot(&hsh).mapv(|x| x * (ca * l.powi(4))));
            let b2 = hch.dot(&sp).dot(&hhc);
            out.b2.index_axis_mut(Axis(2), p).assign(&b2.mapv(|x| x * (cb2 * l.powi(5))));
        }
        return Ok(out);
    }
    if quad_steps < 8 {
        return Err(PerturbativeError::TooFewSteps(quad_steps));
    }
    let dz = length / quad_steps as f64;
    let zs: Vec<f64> = (0..=quad_steps).map(|k| k as f64 * dz).collect();
    let hs: Vec<Mat> = zs.iter().map(|&z| coupling.at(z)).collect();
    let hcs: Vec<Mat> = hs.iter().map(linalg::conj).collect();
    let ss: Vec<Tensor3> = zs.iter().map(|&z| coupling.source(z)).collect();

    let cumulative = |f: &dyn Fn(usize) -> Mat| -> Vec<Mat> {
        let mut acc = vec![linalg::zeros(n)];
        let mut prev = f(0);
        for k in 1..=quad_steps {
            let cur = f(k);
            let next = &acc[k - 1] + &(&prev + &cur).mapv(|x| x * (0.5 * dz));
            acc.push(next);
            prev = cur;
        }
        acc
    };

    let p1 = cumulative(&|k| hs[k].clone());
    let p1c: Vec<Mat> = p1.iter().map(linalg::conj).collect();
    let p2 = cumulative(&|k| (hcs[k].dot(&p1[k]) + p1c[k].dot(&hs[k])).mapv(|x| x * 0.5));

    let mut out = CorrectionKernels::zero(n, np, length);
    for p in 0..np {
        let sp: Vec<Mat> = ss.iter().map(|s| linalg::slice(s, p)).collect();
        let b1 = cumulative(&|k| p1[k].dot(&sp[k]).dot(&p1[k]));
        let mut a1 = cumulative(&|k| p2[k].dot(&sp[k]).dot(&p1[k]));
        if form == LeadingForm::Complete {
            let fb = cumulative(&|k| hcs[k].dot(&b1[k]).mapv(|x| x * 0.5));
            a1 = a1.iter().zip(&fb).map(|(x, y)| x + y).collect();
        }
        let mut b2 = cumulative(&|k| p2[k].dot(&sp[k]).dot(&p2[k].t()));
        if form == LeadingForm::Complete {
            let fb = cumulative(&|k| (hcs[k].dot(&a1[k].t()) + a1[k].dot(&hcs[k])).mapv(|x| x * 0.5));
            b2 = b2.iter().zip(&fb).map(|(x, y)| x + y).collect();
        }
        out.a1.index_axis_mut(Axis(2), p).assign(&a1[quad_steps]);
        out.b1.index_axis_mut(Axis(2), p).assign(&b1[quad_steps]);
        out.b2.index_axis_mut(Axis(2), p).assign(&b2[quad_steps]);
    }
    Ok(out)
}

/// Pump amplitude and photon bookkeeping along the crystal.
#[derive(Debug, Clone, PartialEq)]
pub struct Depletion {
    pub z: Vec<f64>,
    /// `ζ̂(z)` in the normalized pump basis.
    pub zeta: Vec<Array1<C64>>,
    /// `ζ†⋄ζ` at each z.
    pub photon_number: Vec<f64>,
    /// Pump photons lost, `‖ζ(0)‖² − ‖ζ(z)‖²`, evaluated without cancellation.
    pub photons_lost: Vec<f64>,
    /// Down-converted photons, `½ tr(A0 − 𝟙)`.
    pub photons_down: Vec<f64>,
}

impl Depletion {
    /// `Δn_down / Δn_lost` at the crystal exit.
    pub fn bookkeeping_ratio(&self) -> f64 {
        let k = self.z.len() - 1;
        self.photons_down[k] / self.photons_lost[k]
    }
}

/// `ζ̂_k(z) = ζ̂_k(0) + (1/2i) ∫₀ᶻ Σ_ij T̃_ijk B0*_ji dz′`, trapezoid on the
/// trajectory's step grid. The `H` inside `B0` stays built from `ζ(0)`.
pub fn pump_depletion(
    coupling: &dyn Coupling,
    trajectory: &[GaussianDCState],
    zeta0: &Array1<C64>,
) -> Result<Depletion, PerturbativeError> {
    let np = coupling.n_pump();
    if zeta0.len() != np {
        return Err(PerturbativeError::DimensionMismatch { expected: np, got: zeta0.len() });
    }
    let factor = C64::new(0.0, -0.5);
    let rate = |s: &GaussianDCState| -> Array1<C64> {
        let t = coupling.dressed(s.z);
        let mut r = Array1::<C64>::zeros(np);
        for ((i, j, p), v) in t.indexed_iter() {
            r[p] += v * s.b[[j, i]].conj();
        }
        r.mapv(|x| x * factor)
    };
    let n0: f64 = zeta0.iter().map(|x| x.norm_sqr()).sum();
    let mut out = Depletion {
        z: vec![trajectory[0].z],
        zeta: vec![zeta0.clone()],
        photon_number: vec![n0],
        photons_lost: vec![0.0],
        photons_down: vec![half_trace_excess(&trajectory[0])],
    };
    let mut delta = Array1::<C64>::zeros(np);
    let mut prev = rate(&trajectory[0]);
    for w in trajectory.windows(2) {
        let cur = rate(&w[1]);
        let dz = w[1].z - w[0].z;
        delta = delta + (&prev + &cur).mapv(|x| x * (0.5 * dz));
        prev = cur;
        let zeta = zeta0 + &delta;
        let cross: f64 = zeta0.iter().zip(delta.iter()).map(|(a, d)| (a.conj() * d).re).sum();
        let d2: f64 = delta.iter().map(|x| x.norm_sqr()).sum();
        out.z.push(w[1].z);
        out.photon_number.push(zeta.iter().map(|x| x.norm_sqr()).sum());
        out.photons_lost.push(-(2.0 * cross + d2));
        out.photons_down.push(half_trace_excess(&w[1]));
        out.zeta.push(zeta);
    }
    Ok(out)
}

fn half_trace_excess(s: &GaussianDCState) -> f64 {
    0.5 * s.a.diag().iter().map(|x| x.re - 1.0).sum::<f64>()
}

/// `‖B0* T̃_p B0*‖_F` over all pump modes.
pub fn obstruction_residual(t_dressed: &Tensor3, b0: &Mat) -> f64 {
    let bc = linalg::conj(b0);
    let np = t_dressed.dim().2;
    (0..np)
        .map(|p| {
            let m = bc.dot(&linalg::slice(t_dressed, p)).dot(&bc);
            m.iter().map(|x| x.norm_sqr()).sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// Ratio of correction-kernel size to semi-classical kernel size,
/// `‖(A1, B1, B2)‖ / ‖(A0 − 𝟙, B0)‖`, with the pump deviation's vacuum
/// amplitude `1/√2` per mode folded into the corrections.
pub fn suppression_ratio(corr: &CorrectionKernels, semi: &GaussianDCState) -> f64 {
    let [a, b, c] = corr.norms();
    let num = (a * a + b * b + c * c).sqrt() / 2f64.sqrt();
    let e = &semi.a - &linalg::identity(semi.dim());
    let den = (linalg::frobenius(&e).powi(2) + linalg::frobenius(&semi.b).powi(2)).sqrt();
    num / den
}
