//! Phase mismatch, vertex, propagation phases, pump profile and the bilinear
//! kernel `H`.
//!
//! Builders take raw grids and return kernels in the normalized basis:
//! `T̂_ijp = √(w_i w_j w_p) T_ijp`, `ζ̂_p = √w_p ζ_p`, so that
//! `Ĥ_ij = 4i Σ_p T̂_ijp ζ̂*_p`.

use std::f64::consts::PI;

use ndarray::Array1;
use thiserror::Error;

use crate::mode_grid::{FieldKind, ModeGrid};
use crate::{Mat, Tensor3, C64};

/// Speed of light, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.854_187_812_8e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrystalError {
    #[error("crystal length must be positive (got {0} m)")]
    NonPositiveLength(f64),

    #[error("{which} index evaluates to {value} at ω = {omega}; expected a value in (1, 5)")]
    IndexOutOfRange { which: &'static str, omega: f64, value: f64 },

    #[error("expected a {expected:?} grid, got {got:?}")]
    WrongGridKind { expected: FieldKind, got: FieldKind },

    #[error("pump {0} width must be positive")]
    NonPositiveWidth(&'static str),

    #[error("pump photon number must be positive and finite (got {0})")]
    BadPhotonNumber(f64),

    #[error("pump profile has {got} entries, pump grid has {expected}")]
    ProfileLength { expected: usize, got: usize },

    #[error("pump profile has zero norm")]
    ZeroProfile,

    #[error("kernel dimensions ({dc} dc, {pump} pump) do not match ({exp_dc} dc, {exp_pump} pump)")]
    DimensionMismatch { dc: usize, pump: usize, exp_dc: usize, exp_pump: usize },
}

/// Refractive index as a polynomial in physical angular frequency.
///
/// The argument is `omega_scale · ω` with ω in internal units, so a model in
/// rad/fs uses `omega_scale = c·1e-15 / L`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexModel {
    pub coeffs: Vec<f64>,
    pub omega_scale: f64,
}

impl IndexModel {
    pub fn constant(n: f64) -> Self {
        Self { coeffs: vec![n], omega_scale: 1.0 }
    }

    pub fn eval(&self, omega: f64) -> f64 {
        let x = omega * self.omega_scale;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    /// Conventional effective coefficient in m/V (`χ = 2 d_eff`).
    DEff(f64),
    /// Cross-section in m², index-independent.
    Sigma(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrystalSpec {
    /// Physical crystal length in metres; the internal length unit.
    pub length_m: f64,
    pub nonlinearity: Nonlinearity,
    pub n_o: IndexModel,
    pub n_eff: IndexModel,
    /// Pump centre frequency, internal units.
    pub omega_p: f64,
}

impl CrystalSpec {
    pub fn validate(&self, grids: &[&ModeGrid]) -> Result<(), CrystalError> {
        if !(self.length_m > 0.0 && self.length_m.is_finite()) {
            return Err(CrystalError::NonPositiveLength(self.length_m));
        }
        for g in grids {
            let (which, model) = match g.kind() {
                FieldKind::Pump => ("pump (extraordinary)", &self.n_eff),
                FieldKind::DownConverted => ("down-converted (ordinary)", &self.n_o),
            };
            for m in g.modes() {
                let value = model.eval(m.omega);
                if !(value > 1.0 && value < 5.0) {
                    return Err(CrystalError::IndexOutOfRange { which, omega: m.omega, value });
                }
            }
        }
        Ok(())
    }

    /// Cross-section in internal units (`σ / L²`) for indices `n1, n2, n0`.
    pub fn sigma(&self, n1: f64, n2: f64, n0: f64) -> f64 {
        let si = match self.nonlinearity {
            Nonlinearity::Sigma(s) => s,
            Nonlinearity::DEff(d) => {
                let chi = 2.0 * d;
                1.5 * (C_LIGHT * HBAR / (2.0 * EPS0) * (n1 * n2).powi(5) / n0.powi(3)).sqrt() * chi
            }
        };
        si / (self.length_m * self.length_m)
    }
}

/// Collinear critical phase mismatch (`c = 1`).
pub fn delta_kz(
    k1: [f64; 2],
    k2: [f64; 2],
    omega1: f64,
    omega2: f64,
    n1: f64,
    n2: f64,
    n_p: f64,
    omega_p: f64,
) -> f64 {
    let dx = k1[0] * omega2 - k2[0] * omega1;
    let dy = k1[1] * omega2 - k2[1] * omega1;
    n1 * n2 * (dx * dx + dy * dy) / (2.0 * omega1 * omega2 * omega_p * n_p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexEntry {
    pub i: usize,
    pub j: usize,
    pub p: usize,
    /// Normalized magnitude `|T̂_ijp|` (the entry at z = 0 is real positive).
    pub magnitude: f64,
    pub delta_kz: f64,
}

/// Sparse vertex with analytic z-phase. Entries are stored for `i ≤ j` and
/// mirrored on expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexKernel {
    pub n_dc: usize,
    pub n_pump: usize,
    pub entries: Vec<VertexEntry>,
}

impl VertexKernel {
    pub fn zero(n_dc: usize, n_pump: usize) -> Self {
        Self { n_dc, n_pump, entries: Vec::new() }
    }

    /// Dense `T̂(z)`.
    pub fn at(&self, z: f64) -> Tensor3 {
        let mut t = Tensor3::zeros((self.n_dc, self.n_dc, self.n_pump));
        for e in &self.entries {
            let v = C64::from_polar(e.magnitude, e.delta_kz * z);
            t[[e.i, e.j, e.p]] += v;
            if e.i != e.j {
                t[[e.j, e.i, e.p]] += v;
            }
        }
        t
    }
}

/// Per-mode propagation phase rate `n|K|²/ω`; the diagonal of `U(z)` is
/// `exp(i z rate)`.
pub fn propagation_rates(grid: &ModeGrid, index: &IndexModel) -> Vec<f64> {
    grid.modes()
        .iter()
        .map(|m| index.eval(m.omega) * m.k_perp_sq() / m.omega)
        .collect()
}

/// Diagonals of `(U_p(z), U_d(z))`.
pub fn propagation_kernels(
    grid_dc: &ModeGrid,
    grid_p: &ModeGrid,
    crystal: &CrystalSpec,
    z: f64,
) -> (Array1<C64>, Array1<C64>) {
    let phase = |rates: Vec<f64>| Array1::from_iter(rates.into_iter().map(|r| C64::from_polar(1.0, r * z)));
    (
        phase(propagation_rates(grid_p, &crystal.n_eff)),
        phase(propagation_rates(grid_dc, &crystal.n_o)),
    )
}

/// `T̃_ijp = u_i u_j T_ijp u_p*` for diagonal propagators.
pub fn dress_vertex(t: &Tensor3, u_p: &Array1<C64>, u_d: &Array1<C64>) -> Result<Tensor3, CrystalError> {
    let (n, n2, np) = t.dim();
    if n != n2 || u_d.len() != n || u_p.len() != np {
        return Err(CrystalError::DimensionMismatch { dc: u_d.len(), pump: u_p.len(), exp_dc: n, exp_pump: np });
    }
    let mut out = t.clone();
    for ((i, j, p), v) in out.indexed_iter_mut() {
        *v *= u_d[i] * u_d[j] * u_p[p].conj();
    }
    Ok(out)
}

fn check_kind(grid: &ModeGrid, expected: FieldKind) -> Result<(), CrystalError> {
    if grid.kind() != expected {
        return Err(CrystalError::WrongGridKind { expected, got: grid.kind() });
    }
    Ok(())
}

/// On-grid matching of `ω₁ + ω₂` and `n₁K₁ + n₂K₂` to pump cells, half-cell
/// tolerance. A sum landing on a cell boundary is shared equally between the
/// cells it touches.
pub fn build_vertex(grid_dc: &ModeGrid, grid_p: &ModeGrid, crystal: &CrystalSpec) -> Result<VertexKernel, CrystalError> {
    check_kind(grid_dc, FieldKind::DownConverted)?;
    check_kind(grid_p, FieldKind::Pump)?;
    crystal.validate(&[grid_dc, grid_p])?;

    let (dw, dkx, dky) = grid_p.steps();
    let cell = grid_p.cell_volume();
    let slack = 1.0 + 1e-12;
    let dc = grid_dc.modes();
    let wd = grid_dc.weights();
    let pump = grid_p.modes();
    let wp = grid_p.weights();
    let two_pi3 = (2.0 * PI).powi(3);

    let mut entries = Vec::new();
    for i in 0..dc.len() {
        for j in i..dc.len() {
            let (a, b) = (&dc[i], &dc[j]);
            let n1 = crystal.n_o.eval(a.omega);
            let n2 = crystal.n_o.eval(b.omega);
            let omega_sum = a.omega + b.omega;
            let kx_sum = n1 * a.kx + n2 * b.kx;
            let ky_sum = n1 * a.ky + n2 * b.ky;
            let hits: Vec<usize> = (0..pump.len())
                .filter(|&p| {
                    let m = &pump[p];
                    let n0 = crystal.n_eff.eval(m.omega);
                    (m.omega - omega_sum).abs() <= 0.5 * dw * slack
                        && (n0 * m.kx - kx_sum).abs() <= 0.5 * n0 * dkx * slack
                        && (n0 * m.ky - ky_sum).abs() <= 0.5 * n0 * dky * slack
                })
                .collect();
            let share = 1.0 / hits.len().max(1) as f64;
            for p in hits {
                let m = &pump[p];
                let n0 = crystal.n_eff.eval(m.omega);
                let sigma = crystal.sigma(n1, n2, n0);
                let raw = two_pi3 * sigma * a.omega * b.omega * m.omega / (cell * n0 * n0) * share;
                let magnitude = raw * (wd[i] * wd[j] * wp[p]).sqrt();
                let dk = delta_kz([a.kx, a.ky], [b.kx, b.ky], a.omega, b.omega, n1, n2, n0, m.omega);
                entries.push(VertexEntry { i, j, p, magnitude, delta_kz: dk });
            }
        }
    }
    if entries.is_empty() {
        log::warn!(
            "no matching (dc, dc, pump) triple on the grids ({} dc, {} pump modes); vertex is empty",
            dc.len(),
            pump.len()
        );
    }
    Ok(VertexKernel { n_dc: dc.len(), n_pump: pump.len(), entries })
}

#[derive(Debug, Clone, PartialEq)]
pub enum PumpShape {
    /// Separable Gaussian amplitude in ω and K around `(ω_p, 0)`; widths are
    /// standard deviations of `|ζ|²` in internal units.
    Gaussian { omega_width: f64, k_width: f64 },
    /// Raw `ζ` values per pump mode, rescaled to the photon number.
    Custom(Vec<C64>),
}

/// Normalized pump amplitudes `ζ̂ = √w ζ` with `‖ζ̂‖² = N_p`.
pub fn pump_profile(grid_p: &ModeGrid, omega_p: f64, shape: &PumpShape, photon_number: f64) -> Result<Array1<C64>, CrystalError> {
    check_kind(grid_p, FieldKind::Pump)?;
    if !(photon_number > 0.0 && photon_number.is_finite()) {
        return Err(CrystalError::BadPhotonNumber(photon_number));
    }
    let raw: Vec<C64> = match shape {
        PumpShape::Gaussian { omega_width, k_width } => {
            if !(*omega_width > 0.0) {
                return Err(CrystalError::NonPositiveWidth("spectral"));
            }
            if !(*k_width > 0.0) {
                return Err(CrystalError::NonPositiveWidth("transverse"));
            }
            grid_p
                .modes()
                .iter()
                .map(|m| {
                    let dw = (m.omega - omega_p) / omega_width;
                    let dk = m.k_perp_sq() / (k_width * k_width);
                    C64::new((-0.25 * (dw * dw + dk)).exp(), 0.0)
                })
                .collect()
        }
        PumpShape::Custom(v) => {
            if v.len() != grid_p.len() {
                return Err(CrystalError::ProfileLength { expected: grid_p.len(), got: v.len() });
            }
            v.clone()
        }
    };
    let hat = grid_p.normalize_vector(&Array1::from(raw));
    let norm2: f64 = hat.iter().map(|x| x.norm_sqr()).sum();
    if !(norm2 > 0.0) || !norm2.is_finite() {
        return Err(CrystalError::ZeroProfile);
    }
    let s = (photon_number / norm2).sqrt();
    Ok(hat.mapv(|x| x * s))
}

/// `Ĥ = 4i Σ_p T̃_ijp ζ̂*_p`.
pub fn bilinear_h(t_dressed: &Tensor3, zeta: &Array1<C64>) -> Result<Mat, CrystalError> {
    let (n, _, np) = t_dressed.dim();
    if zeta.len() != np {
        return Err(CrystalError::DimensionMismatch { dc: n, pump: zeta.len(), exp_dc: n, exp_pump: np });
    }
    let mut h = Mat::zeros((n, n));
    for ((i, j, p), v) in t_dressed.indexed_iter() {
        h[[i, j]] += v * zeta[p].conj();
    }
    Ok(h.mapv(|x| x * C64::new(0.0, 4.0)))
}

/// A two-index kernel as a function of z.
pub trait KernelProfile: Sync {
    fn dim(&self) -> usize;
    fn at(&self, z: f64) -> Mat;
    /// True when `at` is known to be z-independent.
    fn is_constant(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantKernel(pub Mat);

impl KernelProfile for ConstantKernel {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn at(&self, _z: f64) -> Mat {
        self.0.clone()
    }
    fn is_constant(&self) -> bool {
        true
    }
}

/// Wraps a closure as a kernel profile.
pub struct FnKernel<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64) -> Mat + Sync> KernelProfile for FnKernel<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn at(&self, z: f64) -> Mat {
        (self.f)(z)
    }
}

/// Vertex, propagation phases and the frozen pump amplitude `ζ̂(0)`: every
/// z-dependent kernel of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpedVertex {
    pub vertex: VertexKernel,
    pub dc_rates: Vec<f64>,
    pub pump_rates: Vec<f64>,
    pub zeta0: Array1<C64>,
}

impl PumpedVertex {
    pub fn new(
        grid_dc: &ModeGrid,
        grid_p: &ModeGrid,
        crystal: &CrystalSpec,
        zeta0: Array1<C64>,
    ) -> Result<Self, CrystalError> {
        let vertex = build_vertex(grid_dc, grid_p, crystal)?;
        if zeta0.len() != grid_p.len() {
            return Err(CrystalError::ProfileLength { expected: grid_p.len(), got: zeta0.len() });
        }
        Ok(Self {
            vertex,
            dc_rates: propagation_rates(grid_dc, &crystal.n_o),
            pump_rates: propagation_rates(grid_p, &crystal.n_eff),
            zeta0,
        })
    }

    pub fn n_dc(&self) -> usize {
        self.vertex.n_dc
    }

    pub fn n_pump(&self) -> usize {
        self.vertex.n_pump
    }

    fn entry_phase(&self, e: &VertexEntry, z: f64) -> f64 {
        z * (e.delta_kz + self.dc_rates[e.i] + self.dc_rates[e.j] - self.pump_rates[e.p])
    }

    /// Dressed vertex `T̃(z)`.
    pub fn dressed(&self, z: f64) -> Tensor3 {
        let v = &self.vertex;
        let mut t = Tensor3::zeros((v.n_dc, v.n_dc, v.n_pump));
        for e in &v.entries {
            let x = C64::from_polar(e.magnitude, self.entry_phase(e, z));
            t[[e.i, e.j, e.p]] += x;
            if e.i != e.j {
                t[[e.j, e.i, e.p]] += x;
            }
        }
        t
    }

    /// Source kernel `S(z) = 2i T̃*(z)`.
    pub fn source(&self, z: f64) -> Tensor3 {
        self.dressed(z).mapv(|x| C64::new(0.0, 2.0) * x.conj())
    }

    /// Same kernel with the pump amplitude replaced.
    pub fn with_zeta(&self, zeta0: Array1<C64>) -> Self {
        Self { zeta0, ..self.clone() }
    }
}

impl KernelProfile for PumpedVertex {
    fn dim(&self) -> usize {
        self.vertex.n_dc
    }

    fn at(&self, z: f64) -> Mat {
        let n = self.vertex.n_dc;
        let mut h = Mat::zeros((n, n));
        for e in &self.vertex.entries {
            let x = C64::from_polar(e.magnitude, self.entry_phase(e, z)) * self.zeta0[e.p].conj() * C64::new(0.0, 4.0);
            h[[e.i, e.j]] += x;
            if e.i != e.j {
                h[[e.j, e.i]] += x;
            }
        }
        h
    }

    fn is_constant(&self) -> bool {
        self.vertex.entries.iter().all(|e| self.entry_phase(e, 1.0) == 0.0)
    }
}
