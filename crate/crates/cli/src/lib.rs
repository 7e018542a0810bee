//! Library side of the `cotrans` command: configuration, the design,
//! verify, simulate and compare pipelines, and SVG plots.

pub mod commands;
pub mod config;
pub mod plots;

pub use commands::{
    cmd_compare, cmd_design, cmd_simulate, cmd_verify, comparison_table, crash_line, design_report, load_design,
    pid_params, proposed_controller, proposed_rise_times, run_design, verify_design, Comparison, ControllerKind,
    DesignOutcome, SimOutcome, VerifyOutcome,
};
pub use config::{DesignSection, PidSection, RunConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    /// The payload crashed in a run that had to survive.
    #[error("{0}")]
    Crash(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Dimension(String),
    /// Design infeasible, solver failure or a vertex that fails verification.
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Crash(_) => 1,
            CliError::Validation(_) | CliError::Output(_) => 2,
            CliError::Dimension(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}
