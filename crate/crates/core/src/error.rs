use thiserror::Error;

use crate::cli::config::ConfigError;
use crate::crystal::CrystalError;
use crate::mode_grid::GridError;
use crate::observables::ObservableError;
use crate::perturbative::PerturbativeError;
use crate::semiclassical::SolverError;

/// Crate-level error. The display form carries the tag of the module the
/// failure came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("[mode_grid] {0}")]
    Grid(#[from] GridError),

    #[error("[crystal_kernels] {0}")]
    Crystal(#[from] CrystalError),

    #[error("[semiclassical] {0}")]
    Solver(#[from] SolverError),

    #[error("[perturbative] {0}")]
    Perturbative(#[from] PerturbativeError),

    #[error("[state_observables] {0}")]
    Observable(#[from] ObservableError),

    #[error("[cli_runner] configuration rejected:\n{}", format_config_errors(.0))]
    Config(Vec<ConfigError>),

    #[error("[cli_runner] {0}")]
    Runner(String),

    #[error("[cli_runner] i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn format_config_errors(errors: &[ConfigError]) -> String {
    errors
        .iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}
