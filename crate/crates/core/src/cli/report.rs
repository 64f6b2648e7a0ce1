//! Report structures and file emission.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{DetectorFrame, ScenarioConfig, SolverKind};
use crate::observables::CovarianceSummary;

pub const SCHEMA_VERSION: &str = "1.0";

/// Columns of `trajectory.csv`.
pub const TRAJECTORY_COLUMNS: [&str; 5] = ["z_mm", "trace_a", "frobenius_b", "purity_residual", "pump_photon_number"];
/// Columns of `corrections.csv`.
pub const CORRECTION_COLUMNS: [&str; 5] = ["z_mm", "norm_a1", "norm_b1", "norm_b2", "obstruction_residual"];
/// Columns of `schmidt.csv`.
pub const SCHMIDT_COLUMNS: [&str; 3] = ["mode", "singular_value", "mean_photons"];
/// Columns of `sweep.csv`.
pub const SWEEP_COLUMNS: [&str; 8] = [
    "target_gain",
    "pump_photon_number",
    "bookkeeping_ratio",
    "suppression_ratio",
    "g2a_over_g0",
    "photons_down",
    "photons_lost",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    InvariantViolation,
    Incomplete,
}

impl RunStatus {
    pub fn exit_code(self) -> u8 {
        match self {
            RunStatus::Ok => 0,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub structure: f64,
    pub purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub solver: SolverKind,
    pub modes_dc: usize,
    pub modes_pump: usize,
    pub vertex_entries: usize,
    /// `‖H(0)‖₂ L`.
    pub gain: f64,
    pub pump_photon_number: f64,
    pub steps: usize,
    pub max_hermiticity_defect: f64,
    pub max_symmetry_defect: f64,
    pub max_purity_residual: f64,
    pub richardson_error: Option<f64>,
    pub tolerances: Tolerances,
    pub invariants_passed: bool,
    pub perturbative: Option<PerturbativeDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbativeDiagnostics {
    /// Frobenius norms of `(A1, B1, B2)` at the exit face.
    pub correction_norms: [f64; 3],
    pub suppression_ratio: f64,
    pub obstruction_residual_entry: f64,
    pub obstruction_residual_min_interior: f64,
    pub obstruction_residual_exit: f64,
    pub photons_down: f64,
    pub photons_lost: f64,
    pub bookkeeping_ratio: f64,
    pub pump_photon_number_decreasing: bool,
    pub leading_order_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorReport {
    pub name: String,
    pub frame: DetectorFrame,
    #[serde(rename = "G0")]
    pub g0: f64,
    #[serde(rename = "G2a")]
    pub g2a: Option<f64>,
    pub total: f64,
    pub relative_correction: Option<f64>,
    pub g1_rms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservablesReport {
    pub mean_photon_number: f64,
    pub purity: f64,
    pub schmidt_spectrum: Vec<f64>,
    pub covariance_summary: CovarianceSummary,
    pub detectors: Vec<DetectorReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverTriangle {
    pub ode_vs_thin: f64,
    pub series_vs_thin: f64,
    pub series_vs_ode: f64,
    pub max_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub detector: String,
    pub quantity: &'static str,
    pub analytic: f64,
    pub oracle: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    /// Absent when `H` depends on z and the thin-crystal form does not apply.
    pub solver_triangle: Option<SolverTriangle>,
    pub phase_space: Vec<OracleComparison>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: &'static str,
    pub status: RunStatus,
    pub error: Option<String>,
    pub echo: ScenarioConfig,
    pub g2a_convention: &'static str,
    pub diagnostics: Option<Diagnostics>,
    pub observables: Option<ObservablesReport>,
    pub oracle: Option<OracleReport>,
    /// Data files written next to the report; the report itself and
    /// `timings.json` are not listed.
    pub manifest: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub target_gain: f64,
    pub directory: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub pump_photon_number: Option<f64>,
    pub bookkeeping_ratio: Option<f64>,
    pub suppression_ratio: Option<f64>,
    pub g2a_over_g0: Option<f64>,
    pub photons_down: Option<f64>,
    pub photons_lost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub schema_version: &'static str,
    pub status: RunStatus,
    pub echo: ScenarioConfig,
    pub g2a_convention: &'static str,
    pub entries: Vec<SweepEntry>,
    pub manifest: Vec<ManifestEntry>,
}

/// Shortest round-trip decimal form; stable across runs.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
    w.write_record(header).map_err(std::io::Error::other)?;
    for r in rows {
        w.write_record(r).map_err(std::io::Error::other)?;
    }
    w.flush()
}

pub fn sweep_rows(entries: &[SweepEntry]) -> Vec<Vec<String>> {
    entries
        .iter()
        .map(|e| {
            vec![
                fmt_f64(e.target_gain),
                fmt_opt(e.pump_photon_number),
                fmt_opt(e.bookkeeping_ratio),
                fmt_opt(e.suppression_ratio),
                fmt_opt(e.g2a_over_g0),
                fmt_opt(e.photons_down),
                fmt_opt(e.photons_lost),
                serde_json::to_value(e.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            ]
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(std::io::Error::other)?;
    f.write_all(b"\n")
}

pub fn manifest_entry(dir: &Path, file: &str) -> std::io::Result<ManifestEntry> {
    let bytes = std::fs::read(dir.join(file))?;
    Ok(ManifestEntry { file: file.to_string(), bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(&bytes)) })
}
