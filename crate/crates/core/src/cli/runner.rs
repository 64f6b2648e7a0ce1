//! Scenario pipeline: grids → vertex → pump → semi-classical solve →
//! corrections → observables, and the files written for each run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{DetectorFrame, OutputFormat, Scenario, SolverKind};
use super::report::*;
use crate::crystal::{propagation_kernels, pump_profile, KernelProfile, PumpedVertex};
use crate::error::{Error, Result};
use crate::linalg;
use crate::observables::{
    assemble_state, count_symbol, covariance_summary, detector_expectation, joint_center, joint_log_density,
    mean_photon_number, phase_space_oracle, reduced_log_density, schmidt_spectrum, semiclassical_expectation,
    DetectorKernel, QuadratureSpec, G2A_CONVENTION,
};
use crate::perturbative::{leading_order_corrections, obstruction_residual, pump_depletion, solve_corrections, suppression_ratio, CorrectionKernels, Depletion, LeadingForm};
use crate::semiclassical::{solve_ode, solve_series, thin_crystal, GaussianDCState, OdeOptions};
use crate::C64;

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub solver: Option<SolverKind>,
    pub perturbative: bool,
    pub formats: Option<Vec<OutputFormat>>,
    pub output_dir: Option<PathBuf>,
    pub force: bool,
    pub oracle: bool,
}

/// In-memory result of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub diagnostics: Diagnostics,
    pub observables: ObservablesReport,
    pub oracle: Option<OracleReport>,
    pub trajectory: Vec<GaussianDCState>,
    pub depletion: Depletion,
    pub corrections: Option<CorrectionKernels>,
    /// `(z, ‖A1‖, ‖B1‖, ‖B2‖, obstruction residual)` along the crystal.
    pub correction_profile: Vec<(f64, [f64; 3], f64)>,
    pub length_mm: f64,
    pub timings: BTreeMap<String, f64>,
}

impl ScenarioOutcome {
    pub fn status(&self) -> RunStatus {
        if self.diagnostics.invariants_passed {
            RunStatus::Ok
        } else {
            RunStatus::InvariantViolation
        }
    }
}

struct Timer(BTreeMap<String, f64>, Instant);

impl Timer {
    fn new() -> Self {
        Self(BTreeMap::new(), Instant::now())
    }
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        let secs = (now - self.1).as_secs_f64();
        log::info!("{stage}: {secs:.3} s");
        self.0.insert(stage.to_string(), secs);
        self.1 = now;
    }
}

fn runner_err(msg: impl Into<String>) -> Error {
    Error::Runner(msg.into())
}

/// Pump amplitudes and kernel for the scenario; with a target gain the
/// photon number is rescaled so that `‖H(0)‖₂ L` matches it.
fn pumped_vertex(s: &Scenario, target_gain: Option<f64>) -> Result<(PumpedVertex, f64, f64)> {
    let zeta = pump_profile(&s.grid_p, s.crystal.omega_p, &s.pump_shape, s.photon_number)?;
    let mut pv = PumpedVertex::new(&s.grid_dc, &s.grid_p, &s.crystal, zeta)?;
    let mut n_p = s.photon_number;
    let mut gain = linalg::spectral_norm(&pv.at(0.0));
    if let Some(target) = target_gain {
        if gain == 0.0 {
            return Err(runner_err("the vertex vanishes on these grids, so no photon number reaches the target gain"));
        }
        n_p *= (target / gain).powi(2);
        let zeta = pump_profile(&s.grid_p, s.crystal.omega_p, &s.pump_shape, n_p)?;
        pv = pv.with_zeta(zeta);
        gain = linalg::spectral_norm(&pv.at(0.0));
    }
    Ok((pv, n_p, gain))
}

fn trajectory_zs(steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 / steps as f64).collect()
}

fn relative_gap(x: &GaussianDCState, y: &GaussianDCState) -> f64 {
    let scale = linalg::max_abs(&x.a).max(linalg::max_abs(&x.b)).max(1.0);
    linalg::max_abs(&(&x.a - &y.a)).max(linalg::max_abs(&(&x.b - &y.b))) / scale
}

/// Runs the full pipeline in memory. The crystal length is the unit of
/// length, so the solvers integrate over `[0, 1]`.
pub fn run_scenario(s: &Scenario, opts: &RunOptions, target_gain: Option<f64>) -> Result<ScenarioOutcome> {
    let mut timer = Timer::new();
    let cfg = &s.config;
    let solver = opts.solver.unwrap_or(cfg.solver.method);
    let perturbative = opts.perturbative || cfg.perturbative.enabled;
    let target_gain = target_gain.or(cfg.pump.target_gain);

    let (pv, n_p, gain) = pumped_vertex(s, target_gain)?;
    if gain > cfg.solver.max_gain {
        return Err(runner_err(format!("gain {gain} exceeds solver.max_gain = {}", cfg.solver.max_gain)));
    }
    timer.lap("kernels");

    let steps = cfg.solver.steps;
    let ode_opts = OdeOptions {
        steps,
        structure_tol: cfg.solver.structure_tol,
        purity_tol: cfg.solver.purity_tol,
        self_check: true,
    };
    let zs = trajectory_zs(steps);
    let mut richardson = None;
    let mut ode_solution = None;
    let trajectory: Vec<GaussianDCState> = match solver {
        SolverKind::Ode => {
            let sol = solve_ode(&pv, 1.0, &ode_opts)?;
            richardson = sol.diagnostics.richardson_error;
            let states = sol.states.clone();
            ode_solution = Some(sol);
            states
        }
        SolverKind::Thin => {
            crate::semiclassical::thin_crystal_from_profile(&pv, 1.0, cfg.solver.thin_tol)?;
            let h0 = pv.at(0.0).mapv(|x| x * C64::new(0.0, -1.0));
            zs.par_iter().map(|&z| thin_crystal(&h0, z)).collect::<std::result::Result<_, _>>()?
        }
        SolverKind::Series => zs
            .par_iter()
            .map(|&z| solve_series(&pv, cfg.solver.series_order, z, cfg.solver.quad_steps))
            .collect::<std::result::Result<_, _>>()?,
    };
    timer.lap("solve");

    let mut diag = Diagnostics {
        solver,
        modes_dc: s.grid_dc.len(),
        modes_pump: s.grid_p.len(),
        vertex_entries: pv.vertex.entries.len(),
        gain,
        pump_photon_number: n_p,
        steps,
        max_hermiticity_defect: 0.0,
        max_symmetry_defect: 0.0,
        max_purity_residual: 0.0,
        richardson_error: richardson,
        tolerances: Tolerances { structure: cfg.solver.structure_tol, purity: cfg.solver.purity_tol },
        invariants_passed: true,
        perturbative: None,
    };
    for st in &trajectory {
        diag.max_hermiticity_defect = diag.max_hermiticity_defect.max(st.hermiticity_defect());
        diag.max_symmetry_defect = diag.max_symmetry_defect.max(st.symmetry_defect());
        diag.max_purity_residual = diag.max_purity_residual.max(st.purity_residual());
    }
    diag.invariants_passed = diag.max_hermiticity_defect <= cfg.solver.structure_tol
        && diag.max_symmetry_defect <= cfg.solver.structure_tol
        && diag.max_purity_residual <= cfg.solver.purity_tol;

    let depletion = pump_depletion(&pv, &trajectory, &pv.zeta0)?;
    let last = trajectory.last().expect("trajectory is never empty").clone();

    let mut corrections = None;
    let mut correction_profile = Vec::new();
    if perturbative {
        let leading_only = cfg.perturbative.leading_order_only;
        let corr: Vec<CorrectionKernels> = if leading_only {
            zs.par_iter()
                .map(|&z| leading_order_corrections(&pv, z, cfg.solver.quad_steps, LeadingForm::Complete))
                .collect::<std::result::Result<_, _>>()?
        } else {
            let sol = match ode_solution.take() {
                Some(sol) => sol,
                None => solve_ode(&pv, 1.0, &OdeOptions { self_check: false, ..ode_opts })?,
            };
            solve_corrections(&pv, &sol, 1.0, steps)?
        };
        let exit = corr.last().expect("corrections include the exit face").clone();
        let obstruction: Vec<f64> = trajectory.iter().map(|st| obstruction_residual(&pv.dressed(st.z), &st.b)).collect();
        correction_profile = corr.iter().zip(&obstruction).map(|(c, &r)| (c.z, c.norms(), r)).collect();
        let k = depletion.z.len() - 1;
        // Compare losses rather than the large photon numbers themselves.
        let decreasing = depletion.photons_lost.windows(2).all(|w| w[1] > w[0]);
        diag.perturbative = Some(PerturbativeDiagnostics {
            correction_norms: exit.norms(),
            suppression_ratio: suppression_ratio(&exit, &last),
            obstruction_residual_entry: obstruction[0],
            obstruction_residual_min_interior: obstruction[1..].iter().copied().fold(f64::INFINITY, f64::min),
            obstruction_residual_exit: obstruction[obstruction.len() - 1],
            photons_down: depletion.photons_down[k],
            photons_lost: depletion.photons_lost[k],
            bookkeeping_ratio: depletion.bookkeeping_ratio(),
            pump_photon_number_decreasing: decreasing,
            leading_order_only: leading_only,
        });
        corrections = Some(exit);
        timer.lap("corrections");
    }

    let state = assemble_state(&last, corrections.as_ref(), &pv.zeta0)?;
    let (_, u_d) = propagation_kernels(&s.grid_dc, &s.grid_p, &s.crystal, 1.0);
    let mut detectors = Vec::with_capacity(s.detectors.len());
    let mut kernels = Vec::with_capacity(s.detectors.len());
    for d in &s.detectors {
        let kernel = DetectorKernel::new(d.matrix.clone())?;
        let kernel = match d.frame {
            DetectorFrame::Lab => kernel.to_dressed(&u_d)?,
            DetectorFrame::Dressed => kernel,
        };
        let report = if perturbative {
            let e = detector_expectation(&state, &kernel)?;
            DetectorReport {
                name: d.name.clone(),
                frame: d.frame,
                g0: e.g0,
                g2a: Some(e.g2a),
                total: e.total,
                relative_correction: e.relative_correction,
                g1_rms: Some(e.g1_rms),
            }
        } else {
            let g0 = semiclassical_expectation(&last.a, &last.b, &kernel)?;
            DetectorReport { name: d.name.clone(), frame: d.frame, g0, g2a: None, total: g0, relative_correction: None, g1_rms: None }
        };
        detectors.push(report);
        kernels.push(kernel);
    }
    let summary = covariance_summary(&last.a, &last.b)?;
    let observables = ObservablesReport {
        mean_photon_number: mean_photon_number(&last.a, &last.b)?,
        purity: summary.purity,
        schmidt_spectrum: schmidt_spectrum(&last.b),
        covariance_summary: summary,
        detectors,
    };
    timer.lap("observables");

    let oracle = if opts.oracle {
        let r = oracle_report(&pv, &last, &state, &kernels, &observables, cfg.solver.series_order, &ode_opts)?;
        timer.lap("oracle");
        Some(r)
    } else {
        None
    };

    Ok(ScenarioOutcome {
        diagnostics: diag,
        observables,
        oracle,
        trajectory,
        depletion,
        corrections,
        correction_profile,
        length_mm: cfg.crystal.length_mm,
        timings: timer.0,
    })
}

fn oracle_report(
    pv: &PumpedVertex,
    last: &GaussianDCState,
    state: &crate::observables::WignerExponent,
    kernels: &[DetectorKernel],
    observables: &ObservablesReport,
    series_order: usize,
    ode_opts: &OdeOptions,
) -> Result<OracleReport> {
    let mut notes = Vec::new();
    let solver_triangle = match crate::semiclassical::thin_crystal_from_profile(pv, 1.0, 1e-12) {
        Ok(thin) => {
            let ode = solve_ode(pv, 1.0, &OdeOptions { self_check: false, ..*ode_opts })?;
            let series = solve_series(pv, series_order, 1.0, ode_opts.steps)?;
            let ode = ode.last();
            let t = SolverTriangle {
                ode_vs_thin: relative_gap(ode, &thin),
                series_vs_thin: relative_gap(&series, &thin),
                series_vs_ode: relative_gap(&series, ode),
                max_discrepancy: 0.0,
            };
            Some(SolverTriangle { max_discrepancy: t.ode_vs_thin.max(t.series_vs_thin).max(t.series_vs_ode), ..t })
        }
        Err(e) => {
            notes.push(format!("solver triangle skipped: {e}"));
            None
        }
    };

    let mut phase_space = Vec::new();
    let spec = QuadratureSpec::default();
    if last.dim() == 1 {
        let semi_only = assemble_state(last, None, &state.zeta)?;
        let reduced = semi_only.trace_out_pump();
        let logw = reduced_log_density(&reduced)?;
        for (k, d) in kernels.iter().zip(&observables.detectors) {
            let oracle = phase_space_oracle(&logw, count_symbol(k), &[0.0, 0.0], &spec)?;
            phase_space.push(OracleComparison {
                detector: d.name.clone(),
                quantity: "G0",
                analytic: d.g0,
                oracle,
                abs_diff: (d.g0 - oracle).abs(),
            });
        }
        if state.corrections.is_some() && state.n_pump() == 1 {
            let logw = joint_log_density(state)?;
            let center = joint_center(state);
            for (k, d) in kernels.iter().zip(&observables.detectors) {
                let oracle = phase_space_oracle(&logw, count_symbol(k), &center, &spec)?;
                phase_space.push(OracleComparison {
                    detector: d.name.clone(),
                    quantity: "G0+G2a",
                    analytic: d.total,
                    oracle,
                    abs_diff: (d.total - oracle).abs(),
                });
            }
        } else if state.corrections.is_some() {
            notes.push("joint quadrature needs one pump mode; skipped".into());
        }
    } else {
        notes.push(format!("phase-space quadrature needs one down-converted mode (have {}); skipped", last.dim()));
    }
    Ok(OracleReport { solver_triangle, phase_space, notes })
}

fn trajectory_rows(o: &ScenarioOutcome) -> Vec<Vec<String>> {
    o.trajectory
        .iter()
        .zip(&o.depletion.photon_number)
        .map(|(st, n)| {
            vec![
                fmt_f64(st.z * o.length_mm),
                fmt_f64(linalg::trace(&st.a).re),
                fmt_f64(linalg::frobenius(&st.b)),
                fmt_f64(st.purity_residual()),
                fmt_f64(*n),
            ]
        })
        .collect()
}

fn correction_rows(o: &ScenarioOutcome) -> Vec<Vec<String>> {
    o.correction_profile
        .iter()
        .map(|(z, n, r)| vec![fmt_f64(z * o.length_mm), fmt_f64(n[0]), fmt_f64(n[1]), fmt_f64(n[2]), fmt_f64(*r)])
        .collect()
}

fn schmidt_rows(spectrum: &[f64]) -> Vec<Vec<String>> {
    spectrum
        .iter()
        .enumerate()
        .map(|(k, &s)| vec![k.to_string(), fmt_f64(s), fmt_f64(0.5 * ((1.0 + s * s).sqrt() - 1.0))])
        .collect()
}

/// Files a run may create; used for the overwrite check.
const OUTPUT_FILES: [&str; 7] =
    ["report.json", "trajectory.csv", "schmidt.csv", "corrections.csv", "timings.json", "sweep.csv", "sweep.json"];

pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && !force {
        let clash: Vec<&str> = OUTPUT_FILES.iter().copied().filter(|f| dir.join(f).exists()).collect();
        if !clash.is_empty() {
            return Err(runner_err(format!(
                "{} already holds results ({}); pass --force to overwrite",
                dir.display(),
                clash.join(", ")
            )));
        }
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn output_dir(s: &Scenario, opts: &RunOptions) -> PathBuf {
    opts.output_dir.clone().unwrap_or_else(|| PathBuf::from(&s.config.output.directory))
}

fn echo(s: &Scenario, opts: &RunOptions) -> super::config::ScenarioConfig {
    let mut c = s.config.clone();
    if let Some(k) = opts.solver {
        c.solver.method = k;
    }
    c.perturbative.enabled |= opts.perturbative;
    if let Some(f) = &opts.formats {
        c.output.formats = f.clone();
    }
    // The directory is where the files are, not part of the result.
    c.output.directory = String::new();
    c
}

/// Writes the outputs of a finished (or failed) scenario into `dir`.
pub fn write_outputs(
    s: &Scenario,
    opts: &RunOptions,
    dir: &Path,
    outcome: &std::result::Result<ScenarioOutcome, Error>,
) -> Result<RunReport> {
    let formats = opts.formats.clone().unwrap_or_else(|| s.config.output.formats.clone());
    let mut written = Vec::new();
    if let (Ok(o), true) = (outcome, formats.contains(&OutputFormat::Csv)) {
        write_csv(&dir.join("trajectory.csv"), &TRAJECTORY_COLUMNS, &trajectory_rows(o))?;
        write_csv(&dir.join("schmidt.csv"), &SCHMIDT_COLUMNS, &schmidt_rows(&o.observables.schmidt_spectrum))?;
        written.extend(["schmidt.csv", "trajectory.csv"]);
        if !o.correction_profile.is_empty() {
            write_csv(&dir.join("corrections.csv"), &CORRECTION_COLUMNS, &correction_rows(o))?;
            written.push("corrections.csv");
            written.sort_unstable();
        }
    }
    let manifest = written.iter().map(|f| manifest_entry(dir, f)).collect::<std::io::Result<Vec<_>>>()?;
    let report = match outcome {
        Ok(o) => RunReport {
            schema_version: SCHEMA_VERSION,
            status: o.status(),
            error: None,
            echo: echo(s, opts),
            g2a_convention: G2A_CONVENTION,
            diagnostics: Some(o.diagnostics.clone()),
            observables: Some(o.observables.clone()),
            oracle: o.oracle.clone(),
            manifest,
        },
        Err(e) => RunReport {
            schema_version: SCHEMA_VERSION,
            status: RunStatus::Incomplete,
            error: Some(e.to_string()),
            echo: echo(s, opts),
            g2a_convention: G2A_CONVENTION,
            diagnostics: None,
            observables: None,
            oracle: None,
            manifest,
        },
    };
    // A failed run always leaves a report so the failure is visible.
    if formats.contains(&OutputFormat::Json) || outcome.is_err() {
        write_json(&dir.join("report.json"), &report)?;
    }
    if let Ok(o) = outcome {
        write_json(&dir.join("timings.json"), &o.timings)?;
    }
    Ok(report)
}

/// `simulate` / `oracle-check`: one scenario into one directory.
pub fn simulate(s: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let dir = output_dir(s, opts);
    prepare_output_dir(&dir, opts.force)?;
    let outcome = run_scenario(s, opts, None);
    let report = write_outputs(s, opts, &dir, &outcome)?;
    if let Err(e) = outcome {
        log::error!("{e}");
    }
    Ok(report)
}

/// `sweep`: one scenario per target gain, each in its own subdirectory,
/// plus a summary table. Corrections are always computed.
pub fn sweep(s: &Scenario, opts: &RunOptions) -> Result<SweepReport> {
    let gains = s
        .config
        .sweep
        .as_ref()
        .map(|sw| sw.target_gains.clone())
        .ok_or_else(|| runner_err("the sweep command needs a [sweep] section with target_gains"))?;
    let dir = output_dir(s, opts);
    prepare_output_dir(&dir, opts.force)?;
    let opts = RunOptions { perturbative: true, ..opts.clone() };
    let entries: Vec<Result<SweepEntry>> = gains
        .par_iter()
        .enumerate()
        .map(|(k, &g)| {
            let sub = format!("gain_{k:03}");
            let sub_dir = dir.join(&sub);
            prepare_output_dir(&sub_dir, opts.force)?;
            let outcome = run_scenario(s, &opts, Some(g));
            let report = write_outputs(s, &opts, &sub_dir, &outcome)?;
            let (p, det) = match &outcome {
                Ok(o) => (o.diagnostics.perturbative.clone(), o.observables.detectors.first().cloned()),
                Err(_) => (None, None),
            };
            Ok(SweepEntry {
                target_gain: g,
                directory: sub,
                status: report.status,
                error: report.error.clone(),
                pump_photon_number: report.diagnostics.as_ref().map(|d| d.pump_photon_number),
                bookkeeping_ratio: p.as_ref().map(|p| p.bookkeeping_ratio),
                suppression_ratio: p.as_ref().map(|p| p.suppression_ratio),
                g2a_over_g0: det.and_then(|d| d.relative_correction),
                photons_down: p.as_ref().map(|p| p.photons_down),
                photons_lost: p.as_ref().map(|p| p.photons_lost),
            })
        })
        .collect();
    let entries = entries.into_iter().collect::<Result<Vec<_>>>()?;
    let formats = opts.formats.clone().unwrap_or_else(|| s.config.output.formats.clone());
    let mut manifest = Vec::new();
    if formats.contains(&OutputFormat::Csv) {
        write_csv(&dir.join("sweep.csv"), &SWEEP_COLUMNS, &sweep_rows(&entries))?;
        manifest.push(manifest_entry(&dir, "sweep.csv")?);
    }
    let status = if entries.iter().all(|e| e.status == RunStatus::Ok) {
        RunStatus::Ok
    } else if entries.iter().any(|e| e.status == RunStatus::Incomplete) {
        RunStatus::Incomplete
    } else {
        RunStatus::InvariantViolation
    };
    let report = SweepReport {
        schema_version: SCHEMA_VERSION,
        status,
        echo: echo(s, &opts),
        g2a_convention: G2A_CONVENTION,
        entries,
        manifest,
    };
    write_json(&dir.join("sweep.json"), &report)?;
    Ok(report)
}
