//! Command-line front end: configuration, orchestration and reports.

pub mod config;
pub mod report;
pub mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{validate_config, OutputFormat, SolverKind};
use runner::RunOptions;

#[derive(Debug, Parser)]
#[command(name = "pdcsim", version, about = "Multimode parametric down-conversion beyond the undepleted pump")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its report.
    Simulate(RunArgs),
    /// Check a configuration and list every problem found.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the scenario once per target gain in the [sweep] section.
    Sweep(RunArgs),
    /// Run one scenario and compare it with the closed-form and quadrature
    /// references.
    OracleCheck(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    /// Compute the first corrections beyond the undepleted pump.
    #[arg(long)]
    pub perturbative: bool,
    /// Output formats; repeat or separate with commas.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Vec<OutputFormat>,
    /// Overwrite results already present in the output directory.
    #[arg(long)]
    pub force: bool,
}

impl RunArgs {
    fn options(&self, oracle: bool) -> RunOptions {
        RunOptions {
            solver: self.solver,
            perturbative: self.perturbative,
            formats: (!self.format.is_empty()).then(|| self.format.clone()),
            output_dir: self.output_dir.clone(),
            force: self.force,
            oracle,
        }
    }
}

/// Exit status: 0 success, 1 failed run or invariant violation, 2 invalid
/// configuration or output directory.
pub fn run(cli: Cli) -> ExitCode {
    let (args, oracle, is_sweep) = match cli.command {
        Command::Validate { config } => {
            return match validate_config(&config) {
                Ok(s) => {
                    println!(
                        "{}: ok ({} down-converted modes, {} pump modes, {} detectors)",
                        config.display(),
                        s.grid_dc.len(),
                        s.grid_p.len(),
                        s.detectors.len()
                    );
                    ExitCode::SUCCESS
                }
                Err(errors) => {
                    eprintln!("{}", crate::Error::Config(errors));
                    ExitCode::from(2)
                }
            };
        }
        Command::Simulate(a) => (a, false, false),
        Command::OracleCheck(a) => (a, true, false),
        Command::Sweep(a) => (a, false, true),
    };
    let scenario = match validate_config(&args.config) {
        Ok(s) => s,
        Err(errors) => {
            eprintln!("{}", crate::Error::Config(errors));
            return ExitCode::from(2);
        }
    };
    let opts = args.options(oracle);
    let status = if is_sweep {
        runner::sweep(&scenario, &opts).map(|r| {
            println!("sweep: {} scenarios, status {:?}", r.entries.len(), r.status);
            r.status
        })
    } else {
        runner::simulate(&scenario, &opts).map(|r| {
            if let Some(e) = &r.error {
                eprintln!("{e}");
            }
            println!("status {:?}", r.status);
            r.status
        })
    };
    match status {
        Ok(s) => ExitCode::from(s.exit_code()),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(match e {
                crate::Error::Runner(_) => 2,
                _ => 1,
            })
        }
    }
}
