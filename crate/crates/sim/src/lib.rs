//! Nonlinear scenario simulator: the hover model with the current true mass
//! and COM, Coriolis coupling, first-order motors, timed disturbance events
//! and crash detection.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod metrics;
pub mod plant;
pub mod scenario;
pub mod tuning;

pub use metrics::rising_time;
pub use plant::{Plant, PlantOptions, WorldState};
pub use scenario::{
    detect_crash, fmt_sig, run_scenario, AccelSource, Controller, CrashCause, CrashReport, EventKind, Sample, Scenario,
    ScenarioEvent, SimResult, SimSettings, TickInput, TickOutput, TickRecord, Trajectory,
};
pub use tuning::{step_rise, tune_pid, Axis, AxisTuning, PidTuneReport, PidTuning, StepProtocol};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("invalid simulation settings: {0}")]
    Settings(String),
    #[error("response never crosses 90% of the step")]
    NoRise,
}
