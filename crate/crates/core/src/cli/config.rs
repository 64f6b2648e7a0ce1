//! Scenario configuration: a TOML tree with unit-suffixed keys, parsed
//! strictly and converted to internal units (`c = 1`, lengths in crystal
//! lengths) at the boundary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crystal::{pump_profile, CrystalSpec, IndexModel, Nonlinearity, PumpShape, C_LIGHT};
use crate::mode_grid::{build_grid, AxisSpec, FieldKind, GridSpec, ModeGrid};
use crate::C64;

/// One configuration problem, located by its key path.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridSection,
    pub crystal: CrystalSection,
    pub pump: PumpSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub perturbative: PerturbativeSection,
    #[serde(default)]
    pub detectors: Vec<DetectorSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub dc: AxisGroup,
    #[serde(default)]
    pub pump: AxisGroup,
}

/// Sampling of one field. The frequency axis is centred on
/// `center_wavelength_nm` (default: the pump wavelength for the pump grid,
/// twice it for the down-converted grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisGroup {
    pub center_wavelength_nm: Option<f64>,
    #[serde(default)]
    pub span_thz: f64,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default)]
    pub kx_span_rad_per_mm: f64,
    #[serde(default = "one")]
    pub kx_count: usize,
    #[serde(default)]
    pub ky_span_rad_per_mm: f64,
    #[serde(default = "one")]
    pub ky_count: usize,
}

impl Default for AxisGroup {
    fn default() -> Self {
        Self {
            center_wavelength_nm: None,
            span_thz: 0.0,
            count: 1,
            kx_span_rad_per_mm: 0.0,
            kx_count: 1,
            ky_span_rad_per_mm: 0.0,
            ky_count: 1,
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSection {
    pub length_mm: f64,
    /// Effective nonlinear coefficient; exclusive with `sigma_m2`.
    pub d_eff_pm_per_v: Option<f64>,
    /// Vertex cross-section; exclusive with `d_eff_pm_per_v`.
    pub sigma_m2: Option<f64>,
    /// Ordinary index as polynomial coefficients in angular frequency (rad/fs),
    /// constant term first.
    pub n_o_poly_rad_per_fs: Vec<f64>,
    /// Extraordinary (pump) index, same convention.
    pub n_e_poly_rad_per_fs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PumpShapeKind {
    #[default]
    Gaussian,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSection {
    pub wavelength_nm: f64,
    /// Pump photon number; exclusive with `target_gain`.
    pub photon_number: Option<f64>,
    /// Choose the photon number so that `‖H‖ L` equals this value.
    pub target_gain: Option<f64>,
    #[serde(default)]
    pub shape: PumpShapeKind,
    /// Standard deviation of `|ζ|²` in frequency.
    pub spectral_width_thz: Option<f64>,
    /// Standard deviation of `|ζ|²` in transverse wavenumber.
    pub transverse_width_rad_per_mm: Option<f64>,
    pub custom_re: Option<Vec<f64>>,
    pub custom_im: Option<Vec<f64>>,
    /// Custom amplitudes from a CSV file with rows `mode, re, im`, relative
    /// to the configuration file. Exclusive with `custom_re` / `custom_im`.
    pub custom_csv: Option<String>,
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Ode,
    Series,
    #[serde(alias = "thin-crystal", alias = "thin_crystal")]
    #[value(alias = "thin-crystal")]
    Thin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub method: SolverKind,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_order")]
    pub series_order: usize,
    #[serde(default = "default_steps")]
    pub quad_steps: usize,
    #[serde(default = "default_structure_tol")]
    pub structure_tol: f64,
    #[serde(default = "default_purity_tol")]
    pub purity_tol: f64,
    /// Largest accepted `‖H(z)‖` variation for the thin-crystal solver.
    #[serde(default = "default_thin_tol")]
    pub thin_tol: f64,
    /// Runs with a larger gain `‖H‖ L` are rejected.
    #[serde(default = "default_max_gain")]
    pub max_gain: f64,
}

fn default_steps() -> usize {
    200
}
fn default_order() -> usize {
    5
}
fn default_structure_tol() -> f64 {
    1e-10
}
fn default_purity_tol() -> f64 {
    1e-8
}
fn default_thin_tol() -> f64 {
    1e-12
}
fn default_max_gain() -> f64 {
    10.0
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            method: SolverKind::Ode,
            steps: default_steps(),
            series_order: default_order(),
            quad_steps: default_steps(),
            structure_tol: default_structure_tol(),
            purity_tol: default_purity_tol(),
            thin_tol: default_thin_tol(),
            max_gain: default_max_gain(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PerturbativeSection {
    #[serde(default)]
    pub enabled: bool,
    /// Use the closed leading-order kernels instead of integrating the
    /// correction equations.
    #[serde(default)]
    pub leading_order_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    All,
    Diagonal,
    Window,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetectorFrame {
    /// Kernel acts on the lab-frame amplitudes at the crystal exit.
    #[default]
    Lab,
    /// Kernel acts on the amplitudes with the free propagation removed.
    Dressed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub name: String,
    pub kind: DetectorKind,
    /// Per-mode efficiencies (`diagonal`).
    pub efficiencies: Option<Vec<f64>>,
    /// Wavelength window (`window`).
    pub min_wavelength_nm: Option<f64>,
    pub max_wavelength_nm: Option<f64>,
    /// Dense kernel in the normalized basis (`dense`): one row per mode,
    /// real and imaginary parts interleaved. Relative paths are taken from
    /// the configuration file's directory.
    pub csv_path: Option<String>,
    #[serde(default)]
    pub frame: DetectorFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_directory() -> String {
    "pdcsim-out".to_string()
}
fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: default_directory(), formats: default_formats() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub target_gains: Vec<f64>,
}

/// A validated scenario in internal units.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub length_m: f64,
    pub grid_dc: ModeGrid,
    pub grid_p: ModeGrid,
    pub crystal: CrystalSpec,
    pub pump_shape: PumpShape,
    /// Reference photon number; replaced by the runner when a target gain is
    /// requested.
    pub photon_number: f64,
    pub detectors: Vec<ResolvedDetector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedDetector {
    pub name: String,
    pub matrix: crate::Mat,
    pub frame: DetectorFrame,
}

/// Angular frequency of a vacuum wavelength, internal units.
pub fn omega_from_wavelength(wavelength_nm: f64, length_m: f64) -> f64 {
    2.0 * std::f64::consts::PI * length_m / (wavelength_nm * 1e-9)
}

/// Angular-frequency span of a frequency span, internal units.
pub fn omega_from_thz(span_thz: f64, length_m: f64) -> f64 {
    2.0 * std::f64::consts::PI * span_thz * 1e12 * length_m / C_LIGHT
}

/// Transverse wavenumber, internal units.
pub fn k_from_rad_per_mm(k: f64, length_m: f64) -> f64 {
    k * 1e3 * length_m
}

/// Reads, parses and validates a configuration file.
pub fn validate_config(path: &Path) -> Result<Scenario, Vec<ConfigError>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![ConfigError::new("<file>", format!("cannot read {}: {e}", path.display()))])?;
    let config = parse_config(&text)?;
    resolve(config, path.parent().unwrap_or(Path::new(".")))
}

/// Strict parse; unknown keys and type errors are reported with their key
/// path.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, Vec<ConfigError>> {
    let de = toml::Deserializer::parse(text).map_err(|e| vec![ConfigError::new("<toml>", e.to_string().trim())])?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let message = e.into_inner().message().trim().to_string();
        vec![ConfigError::new(if key == "." { "<root>".to_string() } else { key }, message)]
    })
}

fn positive(errors: &mut Vec<ConfigError>, key: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errors.push(ConfigError::new(key, format!("must be positive and finite (got {v})")));
    }
}

fn non_negative(errors: &mut Vec<ConfigError>, key: &str, v: f64) {
    if !(v >= 0.0 && v.is_finite()) {
        errors.push(ConfigError::new(key, format!("must be non-negative and finite (got {v})")));
    }
}

fn axis_spec(errors: &mut Vec<ConfigError>, key: &str, g: &AxisGroup, center_nm: f64, length_m: f64) -> Option<GridSpec> {
    let mut ok = true;
    for (k, c) in [("count", g.count), ("kx_count", g.kx_count), ("ky_count", g.ky_count)] {
        if c == 0 {
            errors.push(ConfigError::new(format!("{key}.{k}"), "must be at least 1"));
            ok = false;
        }
    }
    for (k, s, c) in [
        ("span_thz", g.span_thz, g.count),
        ("kx_span_rad_per_mm", g.kx_span_rad_per_mm, g.kx_count),
        ("ky_span_rad_per_mm", g.ky_span_rad_per_mm, g.ky_count),
    ] {
        let before = errors.len();
        non_negative(errors, &format!("{key}.{k}"), s);
        if errors.len() == before && c > 1 && s == 0.0 {
            errors.push(ConfigError::new(format!("{key}.{k}"), "must be positive when more than one point is requested"));
        }
        ok &= errors.len() == before;
    }
    if !ok {
        return None;
    }
    let kind = if key.ends_with("pump") { FieldKind::Pump } else { FieldKind::DownConverted };
    Some(GridSpec {
        kind,
        omega: AxisSpec::new(omega_from_wavelength(center_nm, length_m), omega_from_thz(g.span_thz, length_m), g.count),
        kx: AxisSpec::new(0.0, k_from_rad_per_mm(g.kx_span_rad_per_mm, length_m), g.kx_count),
        ky: AxisSpec::new(0.0, k_from_rad_per_mm(g.ky_span_rad_per_mm, length_m), g.ky_count),
    })
}

/// Semantic validation. Every problem found is reported, not just the first.
pub fn resolve(config: ScenarioConfig, base_dir: &Path) -> Result<Scenario, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let c = &config;

    positive(&mut errors, "crystal.length_mm", c.crystal.length_mm);
    let length_m = c.crystal.length_mm * 1e-3;
    let nonlinearity = match (c.crystal.d_eff_pm_per_v, c.crystal.sigma_m2) {
        (Some(d), None) => {
            positive(&mut errors, "crystal.d_eff_pm_per_v", d);
            Some(Nonlinearity::DEff(d * 1e-12))
        }
        (None, Some(s)) => {
            positive(&mut errors, "crystal.sigma_m2", s);
            Some(Nonlinearity::Sigma(s))
        }
        _ => {
            errors.push(ConfigError::new("crystal", "exactly one of d_eff_pm_per_v and sigma_m2 must be given"));
            None
        }
    };
    for (key, poly) in [("crystal.n_o_poly_rad_per_fs", &c.crystal.n_o_poly_rad_per_fs), ("crystal.n_e_poly_rad_per_fs", &c.crystal.n_e_poly_rad_per_fs)] {
        if poly.is_empty() || poly.iter().any(|x| !x.is_finite()) {
            errors.push(ConfigError::new(key, "needs at least one finite coefficient"));
        }
    }

    positive(&mut errors, "pump.wavelength_nm", c.pump.wavelength_nm);
    match (c.pump.photon_number, c.pump.target_gain) {
        (Some(n), None) => positive(&mut errors, "pump.photon_number", n),
        (None, Some(g)) => positive(&mut errors, "pump.target_gain", g),
        _ => errors.push(ConfigError::new("pump", "exactly one of photon_number and target_gain must be given")),
    }
    if !c.pump.phase_rad.is_finite() {
        errors.push(ConfigError::new("pump.phase_rad", "must be finite"));
    }

    let s = &c.solver;
    if s.steps < 8 {
        errors.push(ConfigError::new("solver.steps", format!("must be at least 8 (got {})", s.steps)));
    }
    if s.quad_steps < 8 {
        errors.push(ConfigError::new("solver.quad_steps", format!("must be at least 8 (got {})", s.quad_steps)));
    }
    if !(1..=crate::semiclassical::MAX_ORDER).contains(&s.series_order) {
        errors.push(ConfigError::new(
            "solver.series_order",
            format!("must be between 1 and {} (got {})", crate::semiclassical::MAX_ORDER, s.series_order),
        ));
    }
    for (k, v) in [("solver.structure_tol", s.structure_tol), ("solver.purity_tol", s.purity_tol), ("solver.thin_tol", s.thin_tol), ("solver.max_gain", s.max_gain)] {
        positive(&mut errors, k, v);
    }
    if c.output.formats.is_empty() {
        errors.push(ConfigError::new("output.formats", "at least one format is required"));
    }
    if let Some(sw) = &c.sweep {
        if sw.target_gains.is_empty() {
            errors.push(ConfigError::new("sweep.target_gains", "must not be empty"));
        }
        for (k, g) in sw.target_gains.iter().enumerate() {
            positive(&mut errors, &format!("sweep.target_gains[{k}]"), *g);
        }
    }

    // Grids need a valid length and pump wavelength.
    let mut grids = None;
    if length_m > 0.0 && length_m.is_finite() && c.pump.wavelength_nm > 0.0 && c.pump.wavelength_nm.is_finite() {
        let dc_center = c.grid.dc.center_wavelength_nm.unwrap_or(2.0 * c.pump.wavelength_nm);
        let p_center = c.grid.pump.center_wavelength_nm.unwrap_or(c.pump.wavelength_nm);
        positive(&mut errors, "grid.dc.center_wavelength_nm", dc_center);
        positive(&mut errors, "grid.pump.center_wavelength_nm", p_center);
        let dc = axis_spec(&mut errors, "grid.dc", &c.grid.dc, dc_center, length_m);
        let pump = axis_spec(&mut errors, "grid.pump", &c.grid.pump, p_center, length_m);
        if let (Some(dc), Some(pump)) = (dc, pump) {
            match (build_grid(&dc), build_grid(&pump)) {
                (Ok(d), Ok(p)) => grids = Some((d, p)),
                (d, p) => {
                    if let Err(e) = d {
                        errors.push(ConfigError::new("grid.dc", e.to_string()));
                    }
                    if let Err(e) = p {
                        errors.push(ConfigError::new("grid.pump", e.to_string()));
                    }
                }
            }
        }
    }

    let scale = C_LIGHT * 1e-15 / length_m;
    let crystal = nonlinearity.map(|nl| CrystalSpec {
        length_m,
        nonlinearity: nl,
        n_o: IndexModel { coeffs: c.crystal.n_o_poly_rad_per_fs.clone(), omega_scale: scale },
        n_eff: IndexModel { coeffs: c.crystal.n_e_poly_rad_per_fs.clone(), omega_scale: scale },
        omega_p: omega_from_wavelength(c.pump.wavelength_nm, length_m),
    });
    if let (Some(cr), Some((d, p))) = (&crystal, &grids) {
        if let Err(e) = cr.validate(&[d, p]) {
            errors.push(ConfigError::new("crystal", e.to_string()));
        }
    }

    let pump_shape = pump_shape(&mut errors, &c.pump, grids.as_ref().map(|g| &g.1), length_m, base_dir);
    if let (Some(shape), Some((_, p)), Some(cr)) = (&pump_shape, &grids, &crystal) {
        if let Err(e) = pump_profile(p, cr.omega_p, shape, 1.0) {
            errors.push(ConfigError::new("pump", e.to_string()));
        }
    }

    let n_dc = grids.as_ref().map(|g| g.0.len());
    let mut detectors = Vec::new();
    if c.detectors.is_empty() {
        if let Some(n) = n_dc {
            detectors.push(ResolvedDetector { name: "all".into(), matrix: crate::linalg::identity(n), frame: DetectorFrame::Lab });
        }
    }
    let mut names = std::collections::BTreeSet::new();
    for (k, d) in c.detectors.iter().enumerate() {
        let key = format!("detectors[{k}]");
        if !names.insert(d.name.clone()) {
            errors.push(ConfigError::new(format!("{key}.name"), format!("duplicate detector name {:?}", d.name)));
        }
        if let Some((grid_dc, _)) = &grids {
            if let Some(m) = detector_matrix(&mut errors, &key, d, grid_dc, length_m, base_dir) {
                detectors.push(ResolvedDetector { name: d.name.clone(), matrix: m, frame: d.frame });
            }
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    let (grid_dc, grid_p) = grids.expect("grids valid when no errors");
    Ok(Scenario {
        photon_number: c.pump.photon_number.unwrap_or(1.0),
        length_m,
        grid_dc,
        grid_p,
        crystal: crystal.expect("crystal valid when no errors"),
        pump_shape: pump_shape.expect("pump valid when no errors"),
        detectors,
        config,
    })
}

fn pump_shape(
    errors: &mut Vec<ConfigError>,
    p: &PumpSection,
    grid_p: Option<&ModeGrid>,
    length_m: f64,
    base_dir: &Path,
) -> Option<PumpShape> {
    let phase = C64::from_polar(1.0, p.phase_rad);
    match p.shape {
        PumpShapeKind::Gaussian => {
            let (Some(w), Some(k)) = (p.spectral_width_thz, p.transverse_width_rad_per_mm) else {
                errors.push(ConfigError::new(
                    "pump",
                    "gaussian shape needs spectral_width_thz and transverse_width_rad_per_mm",
                ));
                return None;
            };
            let before = errors.len();
            positive(errors, "pump.spectral_width_thz", w);
            positive(errors, "pump.transverse_width_rad_per_mm", k);
            if errors.len() != before {
                return None;
            }
            let grid_p = grid_p?;
            let omega_width = omega_from_thz(w, length_m);
            let k_width = k_from_rad_per_mm(k, length_m);
            let omega_p = omega_from_wavelength(p.wavelength_nm, length_m);
            // Fold the global phase into explicit per-mode amplitudes.
            let values = grid_p
                .modes()
                .iter()
                .map(|m| {
                    let dw = (m.omega - omega_p) / omega_width;
                    let dk = m.k_perp_sq() / (k_width * k_width);
                    phase * (-0.25 * (dw * dw + dk)).exp()
                })
                .collect();
            Some(PumpShape::Custom(values))
        }
        PumpShapeKind::Custom if p.custom_csv.is_some() => {
            if p.custom_re.is_some() || p.custom_im.is_some() {
                errors.push(ConfigError::new("pump.custom_csv", "exclusive with custom_re and custom_im"));
                return None;
            }
            let path = base_dir.join(p.custom_csv.as_deref().expect("guarded"));
            let n = grid_p?.len();
            match read_pump_csv(&path, n) {
                Ok(v) => Some(PumpShape::Custom(v.into_iter().map(|x| phase * x).collect())),
                Err(msg) => {
                    errors.push(ConfigError::new("pump.custom_csv", msg));
                    None
                }
            }
        }
        PumpShapeKind::Custom => {
            let Some(re) = &p.custom_re else {
                errors.push(ConfigError::new("pump.custom_re", "required for the custom shape"));
                return None;
            };
            let im = p.custom_im.clone().unwrap_or_else(|| vec![0.0; re.len()]);
            if im.len() != re.len() {
                errors.push(ConfigError::new("pump.custom_im", format!("has {} entries, custom_re has {}", im.len(), re.len())));
                return None;
            }
            if let Some(g) = grid_p {
                if re.len() != g.len() {
                    errors.push(ConfigError::new("pump.custom_re", format!("has {} entries, pump grid has {} modes", re.len(), g.len())));
                    return None;
                }
            }
            Some(PumpShape::Custom(re.iter().zip(&im).map(|(&a, &b)| phase * C64::new(a, b)).collect()))
        }
    }
}

fn detector_matrix(
    errors: &mut Vec<ConfigError>,
    key: &str,
    d: &DetectorSection,
    grid: &ModeGrid,
    length_m: f64,
    base_dir: &Path,
) -> Option<crate::Mat> {
    use crate::observables::DetectorKernel;
    let n = grid.len();
    let matrix = match d.kind {
        DetectorKind::All => crate::linalg::identity(n),
        DetectorKind::Diagonal => {
            let Some(eff) = &d.efficiencies else {
                errors.push(ConfigError::new(format!("{key}.efficiencies"), "required for a diagonal detector"));
                return None;
            };
            if eff.len() != n {
                errors.push(ConfigError::new(
                    format!("{key}.efficiencies"),
                    format!("has {} entries, down-converted grid has {n} modes", eff.len()),
                ));
                return None;
            }
            crate::Mat::from_diag(&ndarray::Array1::from_iter(eff.iter().map(|&e| C64::new(e, 0.0))))
        }
        DetectorKind::Window => {
            let (Some(lo), Some(hi)) = (d.min_wavelength_nm, d.max_wavelength_nm) else {
                errors.push(ConfigError::new(key, "window detector needs min_wavelength_nm and max_wavelength_nm"));
                return None;
            };
            if !(lo > 0.0 && hi > lo) {
                errors.push(ConfigError::new(format!("{key}.max_wavelength_nm"), "window must satisfy 0 < min < max"));
                return None;
            }
            let (w_lo, w_hi) = (omega_from_wavelength(hi, length_m), omega_from_wavelength(lo, length_m));
            let mask: Vec<bool> = grid.modes().iter().map(|m| m.omega >= w_lo && m.omega <= w_hi).collect();
            DetectorKernel::window(&mask).matrix().clone()
        }
        DetectorKind::Dense => {
            let Some(rel) = &d.csv_path else {
                errors.push(ConfigError::new(format!("{key}.csv_path"), "required for a dense detector"));
                return None;
            };
            let path: PathBuf = base_dir.join(rel);
            match read_dense(&path, n) {
                Ok(m) => m,
                Err(msg) => {
                    errors.push(ConfigError::new(format!("{key}.csv_path"), msg));
                    return None;
                }
            }
        }
    };
    match DetectorKernel::new(matrix) {
        Ok(k) => Some(k.matrix().clone()),
        Err(e) => {
            errors.push(ConfigError::new(key.to_string(), e.to_string()));
            None
        }
    }
}

/// Rows `mode, re, im`, every pump mode exactly once; a header row is
/// allowed.
fn read_pump_csv(path: &Path, n: usize) -> Result<Vec<C64>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut values: Vec<Option<C64>> = vec![None; n];
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if line == 0 && rec.get(0).is_some_and(|f| f.parse::<usize>().is_err()) {
            continue;
        }
        if rec.len() != 3 {
            return Err(format!("{}: line {}: expected mode, re, im", path.display(), line + 1));
        }
        let bad = |e: &dyn std::fmt::Display| format!("{}: line {}: {e}", path.display(), line + 1);
        let mode: usize = rec[0].parse().map_err(|e| bad(&e))?;
        let re: f64 = rec[1].parse().map_err(|e| bad(&e))?;
        let im: f64 = rec[2].parse().map_err(|e| bad(&e))?;
        let slot = values.get_mut(mode).ok_or_else(|| bad(&format!("mode {mode} outside the {n}-mode pump grid")))?;
        if slot.replace(C64::new(re, im)).is_some() {
            return Err(bad(&format!("mode {mode} listed twice")));
        }
    }
    values
        .into_iter()
        .enumerate()
        .map(|(k, v)| v.ok_or_else(|| format!("{}: pump mode {k} missing", path.display())))
        .collect()
}

fn read_dense(path: &Path, n: usize) -> Result<crate::Mat, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let vals: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        rows.push(vals.map_err(|e| format!("{}: {e}", path.display()))?);
    }
    if rows.len() != n || rows.iter().any(|r| r.len() != 2 * n) {
        return Err(format!("expected {n} rows of {} values (re, im interleaved) for the down-converted grid", 2 * n));
    }
    Ok(crate::Mat::from_shape_fn((n, n), |(i, j)| C64::new(rows[i][2 * j], rows[i][2 * j + 1])))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
[grid.dc]
[grid.pump]

[crystal]
length_mm = 1.0
d_eff_pm_per_v = 2.0
n_o_poly_rad_per_fs = [1.6]
n_e_poly_rad_per_fs = [1.55]

[pump]
wavelength_nm = 405.0
photon_number = 1e6
spectral_width_thz = 1.0
transverse_width_rad_per_mm = 10.0
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let s = resolve(parse_config(MINIMAL).unwrap(), Path::new(".")).unwrap();
        assert_eq!(s.grid_dc.len(), 1);
        assert_eq!(s.grid_p.len(), 1);
        assert_eq!(s.config.solver, SolverSection::default());
        assert!(!s.config.perturbative.enabled);
        assert_eq!(s.detectors.len(), 1);
        assert_eq!(s.detectors[0].name, "all");
        assert_eq!(s.config.output.formats, vec![OutputFormat::Json, OutputFormat::Csv]);
        // Degenerate: the dc mode sits at half the pump frequency.
        let w = s.grid_dc.modes()[0].omega;
        assert!((2.0 * w - s.grid_p.modes()[0].omega).abs() < 1e-9 * w);
        assert!((w - std::f64::consts::PI * 1e-3 / 405e-9).abs() < 1e-9 * w);
    }

    #[test]
    fn negative_length_names_the_key() {
        let text = MINIMAL.replace("length_mm = 1.0", "length_mm = -1.0");
        let errors = resolve(parse_config(&text).unwrap(), Path::new(".")).unwrap_err();
        assert_eq!(errors.len(), 1, "{errors:?}");
        assert_eq!(errors[0].key, "crystal.length_mm");
    }

    #[test]
    fn wrong_detector_dimensions_reported_individually() {
        let mut text = MINIMAL.to_string();
        for k in 0..3 {
            text.push_str(&format!("\n[[detectors]]\nname = \"d{k}\"\nkind = \"diagonal\"\nefficiencies = [0.5, 0.5]\n"));
        }
        let errors = resolve(parse_config(&text).unwrap(), Path::new(".")).unwrap_err();
        let keys: Vec<&str> = errors.iter().map(|e| e.key.as_str()).collect();
        assert_eq!(keys, ["detectors[0].efficiencies", "detectors[1].efficiencies", "detectors[2].efficiencies"]);
    }

    #[test]
    fn unknown_key_rejected_with_path() {
        let text = MINIMAL.replace("length_mm = 1.0", "length_mm = 1.0\nlenght_cm = 2.0");
        let errors = parse_config(&text).unwrap_err();
        assert_eq!(errors.len(), 1);
        assert!(errors[0].key.starts_with("crystal"), "{errors:?}");
        assert!(errors[0].message.contains("lenght_cm"), "{errors:?}");
    }

    #[test]
    fn type_error_has_path() {
        let text = MINIMAL.replace("count", "x").replace("[grid.dc]", "[grid.dc]\ncount = \"three\"");
        let errors = parse_config(&text).unwrap_err();
        assert_eq!(errors[0].key, "grid.dc.count");
    }

    #[test]
    fn exclusive_keys() {
        let text = MINIMAL.replace("photon_number = 1e6", "photon_number = 1e6\ntarget_gain = 0.1");
        let errors = resolve(parse_config(&text).unwrap(), Path::new(".")).unwrap_err();
        assert_eq!(errors[0].key, "pump");
    }

    #[test]
    fn validation_is_deterministic_and_collects_everything() {
        let text = MINIMAL
            .replace("length_mm = 1.0", "length_mm = 0.0")
            .replace("wavelength_nm = 405.0", "wavelength_nm = -5.0")
            .replace("n_o_poly_rad_per_fs = [1.6]", "n_o_poly_rad_per_fs = []");
        let a = resolve(parse_config(&text).unwrap(), Path::new(".")).unwrap_err();
        let b = resolve(parse_config(&text).unwrap(), Path::new(".")).unwrap_err();
        assert_eq!(a, b);
        let keys: Vec<&str> = a.iter().map(|e| e.key.as_str()).collect();
        assert!(keys.contains(&"crystal.length_mm"));
        assert!(keys.contains(&"pump.wavelength_nm"));
        assert!(keys.contains(&"crystal.n_o_poly_rad_per_fs"));
    }

    #[test]
    fn pump_csv_matches_inline_amplitudes() {
        let tmp = tempfile::tempdir().unwrap();
        let base = MINIMAL.replace("[grid.pump]", "[grid.pump]\nspan_thz = 3.0\ncount = 3").replace(
            "spectral_width_thz = 1.0\ntransverse_width_rad_per_mm = 10.0",
            "shape = \"custom\"",
        );
        std::fs::write(tmp.path().join("zeta.csv"), "mode,re,im\n2,0.25,0.0\n0,1.0,-0.5\n1,0.5,0.5\n").unwrap();
        let from_csv = base.replace("shape = \"custom\"", "shape = \"custom\"\ncustom_csv = \"zeta.csv\"");
        let inline = base.replace("shape = \"custom\"", "shape = \"custom\"\ncustom_re = [1.0, 0.5, 0.25]\ncustom_im = [-0.5, 0.5, 0.0]");
        let a = resolve(parse_config(&from_csv).unwrap(), tmp.path()).unwrap();
        let b = resolve(parse_config(&inline).unwrap(), tmp.path()).unwrap();
        assert_eq!(a.pump_shape, b.pump_shape);

        std::fs::write(tmp.path().join("zeta.csv"), "0,1.0,0.0\n2,0.5,0.0\n").unwrap();
        let errors = resolve(parse_config(&from_csv).unwrap(), tmp.path()).unwrap_err();
        assert_eq!(errors[0].key, "pump.custom_csv");
        assert!(errors[0].message.contains("mode 1 missing"), "{errors:?}");
    }
}
