//! Step responses and the PID tuning loop.
//!
//! The PID baseline is tuned axis by axis: its gains follow
//! [`PidGains::from_bandwidth`], and the bandwidth of each axis is bisected
//! until the step rising time lands in a window around the proposed
//! controller's.

use cotrans_control::{PidController, PidGains, PidParams};
use cotrans_core::model::PayloadConfig;
use serde::{Deserialize, Serialize};

use crate::metrics::rising_time;
use crate::scenario::{run_scenario, Controller, EventKind, Sample, Scenario, ScenarioEvent, SimSettings};
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
    Yaw,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::X, Axis::Y, Axis::Z, Axis::Yaw];

    pub fn label(self) -> &'static str {
        match self {
            Axis::X => "X",
            Axis::Y => "Y",
            Axis::Z => "Z",
            Axis::Yaw => "psi",
        }
    }

    /// Start and goal poses `[x, y, z, ψ]`: 0→3 m on x and y, 1→3 m on z,
    /// 0→0.5 rad on yaw. Untouched axes hold 2 m altitude.
    pub fn endpoints(self) -> ([f64; 4], [f64; 4]) {
        let mut start = [0.0, 0.0, 2.0, 0.0];
        let mut goal = start;
        match self {
            Axis::X => goal[0] = 3.0,
            Axis::Y => goal[1] = 3.0,
            Axis::Z => {
                start[2] = 1.0;
                goal[2] = 3.0;
            }
            Axis::Yaw => goal[3] = 0.5,
        }
        (start, goal)
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn read(self, s: &Sample) -> f64 {
        match self {
            Axis::X => s.world.x,
            Axis::Y => s.world.y,
            Axis::Z => s.world.z,
            Axis::Yaw => s.attitude.z,
        }
    }
}

/// Timing of a step experiment at nominal mass with the COM at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepProtocol {
    pub mass: f64,
    /// Hover-thrust acquisition time, for controllers that use it.
    pub acquire_time: Option<f64>,
    pub step_time: f64,
    /// Time simulated after the step.
    pub settle: f64,
}

impl StepProtocol {
    /// Hover, acquire the hover thrust at 18 s, step at 30 s.
    pub fn proposed() -> Self {
        Self {
            mass: 3.5,
            acquire_time: Some(18.0),
            step_time: 30.0,
            settle: 15.0,
        }
    }

    /// The PID needs no acquisition, so the step comes right away.
    pub fn pid() -> Self {
        Self {
            mass: 3.5,
            acquire_time: None,
            step_time: 1.0,
            settle: 15.0,
        }
    }

    pub fn scenario(&self, axis: Axis) -> Scenario {
        let (start, goal) = axis.endpoints();
        let mut events = Vec::new();
        if let Some(t) = self.acquire_time {
            events.push(ScenarioEvent::new(t, EventKind::AcquireU0));
        }
        events.push(ScenarioEvent::new(self.step_time, EventKind::SetTarget { pose: goal }));
        Scenario {
            initial_position: [start[0], start[1], start[2]],
            initial_yaw: start[3],
            initial_mass: self.mass,
            initial_com: [0.0; 3],
            horizon: self.step_time + self.settle,
            events,
        }
    }
}

/// Rising time of one step response. A crash counts as no rise.
pub fn step_rise(
    config: &PayloadConfig,
    controller: &mut dyn Controller,
    axis: Axis,
    protocol: &StepProtocol,
    settings: &SimSettings,
) -> Result<f64, SimError> {
    let result = run_scenario(config, controller, &protocol.scenario(axis), settings)?;
    if result.crash.crashed {
        return Err(SimError::NoRise);
    }
    let (start, goal) = axis.endpoints();
    let (t, y) = result.trajectory.series(|s| axis.read(s));
    let k = t.partition_point(|v| *v < protocol.step_time);
    rising_time(&t[k..], &y[k..], start[axis.index()], goal[axis.index()])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidTuning {
    pub zeta: f64,
    /// Integral pole as a fraction of the bandwidth.
    pub integral_ratio: f64,
    /// Fixed roll and pitch bandwidth of the inner loop, rad/s.
    pub attitude_omega: f64,
    pub max_tilt: f64,
    pub integral_limit: f64,
    /// Bisection bracket for the tuned bandwidths, rad/s.
    pub omega_range: [f64; 2],
    /// Accepted relative rising-time mismatch.
    pub window: f64,
    pub max_iterations: usize,
}

impl Default for PidTuning {
    fn default() -> Self {
        Self {
            zeta: 1.5,
            integral_ratio: 0.5,
            attitude_omega: 8.0,
            max_tilt: 0.5,
            integral_limit: 10.0,
            omega_range: [0.1, 6.0],
            window: 0.10,
            max_iterations: 30,
        }
    }
}

impl PidTuning {
    /// PID parameters with bandwidths `[ω_x, ω_y, ω_z, ω_ψ]`.
    pub fn params(&self, config: &PayloadConfig, omegas: [f64; 4]) -> PidParams {
        let bw = |w: f64| PidGains::from_bandwidth(w, self.zeta, self.integral_ratio);
        let inertia = config.inertia_matrix();
        PidParams {
            position: [bw(omegas[0]), bw(omegas[1]), bw(omegas[2])],
            attitude: [bw(self.attitude_omega), bw(self.attitude_omega), bw(omegas[3])],
            mass: config.mass,
            inertia: [inertia[(0, 0)], inertia[(1, 1)], inertia[(2, 2)]],
            max_tilt: self.max_tilt,
            integral_limit: self.integral_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisTuning {
    pub axis: Axis,
    pub omega: f64,
    /// Measured rising time, `None` if the best bandwidth never rose.
    pub rise: Option<f64>,
    /// Rising time the loop aimed for.
    pub aim: f64,
    /// Proposed controller's rising time.
    pub reference: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidTuneReport {
    pub params: PidParams,
    pub axes: [AxisTuning; 4],
    pub converged: bool,
}

/// Bisects each axis bandwidth (in log scale) until the PID rising time is
/// within `window` of `reference`. With `preferred` the loop aims at those
/// times instead, clamped to 80 % of the window around `reference`.
pub fn tune_pid(
    config: &PayloadConfig,
    reference: [f64; 4],
    preferred: Option<[f64; 4]>,
    tuning: &PidTuning,
    settings: &SimSettings,
) -> Result<PidTuneReport, SimError> {
    let [lo, hi] = tuning.omega_range;
    if !(lo > 0.0 && hi > lo && tuning.window > 0.0) {
        return Err(SimError::Settings("PID tuning bracket or window is invalid".into()));
    }
    let protocol = StepProtocol::pid();
    let mut omegas = [1.0; 4];
    let mut axes = Vec::with_capacity(4);
    for axis in Axis::ALL {
        let k = axis.index();
        let r = reference[k];
        let band = 0.8 * tuning.window;
        let aim = preferred.map_or(r, |p| p[k].clamp(r * (1.0 - band), r * (1.0 + band)));
        let rise_at = |w: f64| -> Option<f64> {
            let mut om = omegas;
            om[k] = w;
            let mut pid = PidController::new(&config.robots, tuning.params(config, om), config.gravity).ok()?;
            step_rise(config, &mut pid, axis, &protocol, settings).ok()
        };
        // Rising time falls as bandwidth grows. A failed run is treated as
        // too aggressive.
        let (mut a, mut b) = (lo.ln(), hi.ln());
        let mut best: Option<(f64, f64)> = None;
        for _ in 0..tuning.max_iterations {
            let mid = 0.5 * (a + b);
            let w = mid.exp();
            match rise_at(w) {
                Some(t) => {
                    if best.is_none_or(|(_, bt)| (t - aim).abs() < (bt - aim).abs()) {
                        best = Some((w, t));
                    }
                    if (t / aim - 1.0).abs() < 0.01 {
                        break;
                    }
                    if t > aim {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                None => b = mid,
            }
        }
        let (omega, rise) = match best {
            Some((w, t)) => (w, Some(t)),
            None => (lo, None),
        };
        omegas[k] = omega;
        axes.push(AxisTuning {
            axis,
            omega,
            rise,
            aim,
            reference: r,
            within: rise.is_some_and(|t| (t / r - 1.0).abs() <= tuning.window),
        });
    }
    let axes: [AxisTuning; 4] = axes.try_into().expect("four axes");
    Ok(PidTuneReport {
        params: tuning.params(config, omegas),
        converged: axes.iter().all(|a| a.within),
        axes,
    })
}
