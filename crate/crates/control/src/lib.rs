//! Per-robot control laws for cooperative transport.
//!
//! [`proposed`] holds the decentralized law each robot runs from broadcast
//! data only; [`pid`] is the centralized cascade baseline it is compared with.

pub mod assc;
pub mod pid;
pub mod proposed;
pub mod snapshot;

pub use assc::{acquire_u0, assc_step, AsscOutput, AsscParams, AsscState};
pub use pid::{Mixer, PidController, PidGains, PidParams};
pub use proposed::{
    approx_output, rfc_input, robot_command, BroadcastSignal, ControlConstants, ProposedController, ProposedParams,
    RobotController, RobotStep, RobotTrace,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("invalid controller parameters: {0}")]
    Params(String),
    #[error("cannot restore controller snapshot: {0}")]
    Archive(String),
}
