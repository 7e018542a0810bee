//! The decentralized law: state feedback from the robust design plus the
//! switching integral on one component of the approximated output.

use cotrans_core::design::{Gain, RfcDesign};
use cotrans_core::model::{OutputMatrix, OutputModel, RobotSpec, StateVector};
use nalgebra::{Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::assc::{acquire_u0, assc_step, AsscParams, AsscState};
use crate::ControlError;

/// Signal broadcast identically to every robot each control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadcastSignal {
    pub xi: StateVector,
    /// `z̈_e`, m/s².
    pub accel_z: f64,
    /// `[φ̈_e, θ̈_e, ψ̈_e]`, rad/s².
    pub accel_ang: Vector3<f64>,
}

impl BroadcastSignal {
    pub fn accelerations(&self) -> Vector4<f64> {
        Vector4::new(self.accel_z, self.accel_ang.x, self.accel_ang.y, self.accel_ang.z)
    }
}

/// Design constants every robot holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlConstants {
    pub f: Gain,
    pub g: Matrix4<f64>,
    pub c: OutputMatrix,
    pub d_hat: Matrix4<f64>,
}

impl ControlConstants {
    pub fn new(design: &RfcDesign, outputs: &OutputModel) -> Self {
        Self {
            f: design.f,
            g: design.g,
            c: outputs.c,
            d_hat: outputs.d_hat,
        }
    }
}

/// `(−Fξ)ᵢ`, applied in full by every robot of quadrant `i` (1-based).
pub fn rfc_input(f: &Gain, xi: &StateVector, quadrant: usize) -> f64 {
    -(f.row(quadrant - 1) * xi)[0]
}

/// `η̂ = G C ξ + G D̂ [z̈; φ̈]`. Uses only broadcast quantities.
pub fn approx_output(outputs: &OutputModel, g: &Matrix4<f64>, b: &BroadcastSignal) -> Vector4<f64> {
    output_from(&outputs.c, &outputs.d_hat, g, b)
}

fn output_from(c: &OutputMatrix, d_hat: &Matrix4<f64>, g: &Matrix4<f64>, b: &BroadcastSignal) -> Vector4<f64> {
    g * (c * b.xi + d_hat * b.accelerations())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotStep {
    pub thrust: f64,
    /// `ρ(φ)` before clamping; zero for a failed robot.
    pub rho: f64,
    pub state: AsscState,
    pub gain: f64,
    pub eta: f64,
}

/// Thrust command of one robot: `clamp(u_f + u_s, 0, U_p)`, or zero for a
/// failed robot (whose switching state is then left untouched).
pub fn robot_command(
    robot: &RobotSpec,
    consts: &ControlConstants,
    params: &AsscParams,
    state: &AsscState,
    broadcast: &BroadcastSignal,
    dt: f64,
    failed: bool,
) -> RobotStep {
    let q = robot.quadrant;
    let eta = output_from(&consts.c, &consts.d_hat, &consts.g, broadcast)[q - 1];
    if failed {
        return RobotStep {
            thrust: 0.0,
            rho: 0.0,
            state: *state,
            gain: params.gain(state, eta),
            eta,
        };
    }
    let uf = rfc_input(&consts.f, &broadcast.xi, q);
    let (out, next) = assc_step(params, state, eta, dt);
    RobotStep {
        thrust: (uf + out.thrust).clamp(0.0, robot.max_thrust),
        rho: out.thrust - state.u0,
        state: next,
        gain: out.gain,
        eta,
    }
}

/// Settings shared by all robots running the proposed law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposedParams {
    pub k_hi: f64,
    pub k_lo: f64,
    pub slope: f64,
    /// Cutoff of the hover-thrust filter, Hz.
    pub lpf_cutoff_hz: f64,
    /// Mass whose weight is split equally as the initial `u0`, kg.
    pub initial_mass: f64,
}

impl Default for ProposedParams {
    fn default() -> Self {
        Self {
            k_hi: 49.0,
            k_lo: 7.0,
            slope: 1.0,
            lpf_cutoff_hz: 5.0,
            initial_mass: 3.5,
        }
    }
}

/// One controller per robot. Each entry only ever touches its own state.
#[derive(Debug, Clone)]
pub struct RobotController {
    pub spec: RobotSpec,
    pub params: AsscParams,
    pub state: AsscState,
}

/// Tick-level record of one robot; `phi` and `acquired` are the values the
/// gain was selected with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotTrace {
    pub thrust: f64,
    pub rho: f64,
    pub eta: f64,
    pub gain: f64,
    pub phi: f64,
    pub acquired: bool,
}

#[derive(Debug, Clone)]
pub struct ProposedController {
    pub consts: ControlConstants,
    pub robots: Vec<RobotController>,
    pub lpf_cutoff_hz: f64,
}

impl ProposedController {
    pub fn new(
        robots: &[RobotSpec],
        consts: ControlConstants,
        params: &ProposedParams,
        gravity: f64,
    ) -> Result<Self, ControlError> {
        if robots.is_empty() {
            return Err(ControlError::Params("no robots".into()));
        }
        let u0 = params.initial_mass * gravity / robots.len() as f64;
        let robots = robots
            .iter()
            .map(|spec| {
                let p = AsscParams {
                    k_hi: params.k_hi,
                    k_lo: params.k_lo,
                    u_max: spec.max_thrust,
                    u_min: spec.min_thrust,
                    slope: params.slope,
                };
                p.validate()?;
                Ok(RobotController {
                    spec: spec.clone(),
                    params: p,
                    state: AsscState::new(u0),
                })
            })
            .collect::<Result<Vec<_>, ControlError>>()?;
        Ok(Self {
            consts,
            robots,
            lpf_cutoff_hz: params.lpf_cutoff_hz,
        })
    }

    /// Advances every robot by one control period and returns their traces.
    /// `acquire` triggers hover-thrust acquisition after this tick's command.
    pub fn tick(&mut self, broadcast: &BroadcastSignal, failed: &[bool], acquire: bool, dt: f64) -> Vec<RobotTrace> {
        let cutoff = self.lpf_cutoff_hz;
        self.robots
            .iter_mut()
            .zip(failed)
            .map(|(rc, &dead)| {
                let step = robot_command(&rc.spec, &self.consts, &rc.params, &rc.state, broadcast, dt, dead);
                let before = rc.state;
                rc.state = if dead {
                    step.state
                } else {
                    acquire_u0(&step.state, step.thrust, dt, cutoff, acquire)
                };
                RobotTrace {
                    thrust: step.thrust,
                    rho: step.rho,
                    eta: step.eta,
                    gain: step.gain,
                    phi: before.phi,
                    acquired: before.u0_acquired,
                }
            })
            .collect()
    }

    /// Puts every robot at a known hover thrust with the variable gain
    /// enabled, as if acquisition had already happened.
    pub fn set_acquired(&mut self, u0: &[f64]) {
        for (rc, &u) in self.robots.iter_mut().zip(u0) {
            rc.state = AsscState {
                phi: 0.0,
                u0: u,
                u0_acquired: true,
                lpf: Some(u),
            };
        }
    }
}
