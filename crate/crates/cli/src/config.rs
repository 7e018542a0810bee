//! Run configuration: one TOML document per experiment.

use std::path::Path;

use cotrans_control::ProposedParams;
use cotrans_core::design::{DesignOptions, PoleRegion, UncertaintyBox};
use cotrans_core::model::{OutputCoefficients, PayloadConfig};
use cotrans_sim::{PidTuning, Scenario, SimSettings};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label used in reports.
    pub name: String,
    pub payload: PayloadConfig,
    pub outputs: OutputCoefficients,
    pub design: DesignSection,
    #[serde(default)]
    pub controller: Option<ProposedParams>,
    #[serde(default)]
    pub pid: PidSection,
    pub scenario: Scenario,
    #[serde(default)]
    pub sim: SimSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub mass_range: [f64; 2],
    pub com_vertices: Vec<[f64; 3]>,
    pub pole_region: PoleRegion,
    #[serde(default)]
    pub options: DesignOptions,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidSection {
    #[serde(default)]
    pub tuning: PidTuning,
    /// Rising times `[X, Y, Z, ψ]` the tuning loop aims for inside its
    /// window, s.
    #[serde(default)]
    pub preferred_rise: Option<[f64; 4]>,
    /// Fixed bandwidths `[ω_x, ω_y, ω_z, ω_ψ]`; skips tuning in `simulate`.
    #[serde(default)]
    pub bandwidths: Option<[f64; 4]>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn uncertainty_box(&self) -> UncertaintyBox {
        UncertaintyBox::new(
            self.design.mass_range,
            self.design.com_vertices.iter().map(|c| Vector3::from(*c)).collect(),
            self.payload.robot_counts(),
        )
    }

    pub fn controller_params(&self) -> ProposedParams {
        self.controller.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: &dyn std::fmt::Display| CliError::Validation(e.to_string());
        self.payload.validate().map_err(|e| invalid(&e))?;
        self.outputs.validate().map_err(|e| invalid(&e))?;
        self.design.pole_region.validate().map_err(|e| invalid(&e))?;
        self.uncertainty_box().validate().map_err(|e| invalid(&e))?;
        self.scenario.validate(&self.payload).map_err(|e| invalid(&e))?;
        self.sim.validate().map_err(|e| invalid(&e))?;
        let p = self.controller_params();
        if !(p.k_lo > 0.0 && p.k_lo <= p.k_hi && p.slope > 0.0 && p.lpf_cutoff_hz > 0.0 && p.initial_mass > 0.0) {
            return Err(CliError::Validation(format!("controller parameters {p:?}")));
        }
        if let Some(w) = self.pid.bandwidths {
            if !w.iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(CliError::Validation("PID bandwidths must be positive".into()));
            }
        }
        Ok(())
    }
}
