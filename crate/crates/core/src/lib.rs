//! Decentralized cooperative transport of a rigid payload by single-rotor
//! robots.
//!
//! The crate covers the linearized hover model and its four-input
//! aggregation ([`model`]), robust SPR feedback synthesis over a
//! mass/COM/failure polytope ([`design`]) and a text archive for designs
//! ([`archive`]). Controllers and the simulator live in their own crates.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod design;
pub mod error;
pub mod model;
pub mod presets;

pub use error::{ArchiveError, DesignError, ModelError};
