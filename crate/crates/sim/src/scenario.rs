use std::fmt::Write as _;

use cotrans_control::{BroadcastSignal, PidController, ProposedController, RobotTrace};
use cotrans_core::model::{acceleration_rows, idx, PayloadConfig, StateVector};
use nalgebra::{DVector, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::plant::{Plant, PlantOptions, WorldState};
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// New reference pose `[x, y, z, ψ]`.
    SetTarget {
        pose: [f64; 4],
    },
    /// New true COM in the payload frame.
    ShiftCom {
        com: [f64; 3],
    },
    ChangeMass {
        mass: f64,
    },
    FailRobot {
        id: String,
    },
    AcquireU0,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl ScenarioEvent {
    pub fn new(time: f64, kind: EventKind) -> Self {
        Self { time, kind }
    }

    fn tag(&self) -> String {
        match &self.kind {
            EventKind::SetTarget { .. } => "set_target".into(),
            EventKind::ShiftCom { .. } => "shift_com".into(),
            EventKind::ChangeMass { .. } => "change_mass".into(),
            EventKind::FailRobot { id } => format!("fail_robot:{id}"),
            EventKind::AcquireU0 => "acquire_u0".into(),
        }
    }
}

/// Initial conditions and the timed events of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Initial position, also the initial reference.
    pub initial_position: [f64; 3],
    #[serde(default)]
    pub initial_yaw: f64,
    pub initial_mass: f64,
    #[serde(default)]
    pub initial_com: [f64; 3],
    pub horizon: f64,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    pub fn validate(&self, config: &PayloadConfig) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Scenario(m));
        if !(self.initial_mass > 0.0) || !(self.horizon >= 0.0) {
            return bad("initial mass must be positive and horizon nonnegative".into());
        }
        if self.events.windows(2).any(|w| w[1].time < w[0].time) {
            return bad("events must be sorted by time".into());
        }
        if self.events.iter().filter(|e| e.kind == EventKind::AcquireU0).count() > 1 {
            return bad("at most one acquire_u0 event".into());
        }
        for e in &self.events {
            match &e.kind {
                EventKind::FailRobot { id } if !config.robots.iter().any(|r| &r.id == id) => {
                    return bad(format!("unknown robot `{id}`"));
                }
                EventKind::ChangeMass { mass } if !(*mass > 0.0) => return bad(format!("mass {mass}")),
                _ => {}
            }
        }
        Ok(())
    }

    /// The disturbance run: acquisition at 18 s, target at 30 s, COM and
    /// mass change at 50 s, one robot lost at 60 s.
    pub fn disturbance(com_after: [f64; 3], failing: &str) -> Self {
        Self {
            initial_position: [0.0, 0.0, 2.0],
            initial_yaw: 0.0,
            initial_mass: 3.0,
            initial_com: [0.0; 3],
            horizon: 100.0,
            events: vec![
                ScenarioEvent::new(18.0, EventKind::AcquireU0),
                ScenarioEvent::new(
                    30.0,
                    EventKind::SetTarget {
                        pose: [3.0, 0.0, 2.0, 0.0],
                    },
                ),
                ScenarioEvent::new(50.0, EventKind::ShiftCom { com: com_after }),
                ScenarioEvent::new(50.0, EventKind::ChangeMass { mass: 4.0 }),
                ScenarioEvent::new(60.0, EventKind::FailRobot { id: failing.into() }),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    /// Integration step, s.
    pub dt: f64,
    pub control_period: f64,
    pub sample_period: f64,
    pub plant: PlantOptions,
    /// Keep every control tick's per-robot trace.
    pub record_ticks: bool,
    pub accel: AccelSource,
    /// Seeds the estimator noise; runs with equal settings are identical.
    pub seed: u64,
}

/// Where the broadcast accelerations `[z̈, φ̈, θ̈, ψ̈]` come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AccelSource {
    /// Read from the plant derivative at the tick.
    Exact,
    /// Backward difference of the measured rates over one control period,
    /// plus zero-mean Gaussian noise. The first tick reports zero.
    Difference { noise_std: f64 },
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            control_period: 5e-3,
            sample_period: 0.01,
            plant: PlantOptions::default(),
            record_ticks: false,
            accel: AccelSource::Exact,
            seed: 0,
        }
    }
}

impl SimSettings {
    /// Checks the settings and returns the number of integration steps per
    /// control period and per sample. The step must resolve the motor lag
    /// (at most a tenth of its time constant).
    pub fn validate(&self) -> Result<(usize, usize), SimError> {
        if let Some(tm) = self.plant.motor_time_constant {
            if !(tm > 0.0) || self.dt > tm / 10.0 + 1e-15 {
                return Err(SimError::Settings(format!(
                    "dt {} must not exceed a tenth of the motor time constant {tm}",
                    self.dt
                )));
            }
        }
        if let AccelSource::Difference { noise_std } = self.accel {
            if !(noise_std >= 0.0 && noise_std.is_finite()) {
                return Err(SimError::Settings(format!("acceleration noise {noise_std}")));
            }
        }
        let per = |p: f64, name: &str| {
            let k = (p / self.dt).round();
            if !(self.dt > 0.0) || k < 1.0 || ((k * self.dt - p).abs() > 1e-9 * p.max(1.0)) {
                Err(SimError::Settings(format!(
                    "{name} {p} is not a multiple of dt {}",
                    self.dt
                )))
            } else {
                Ok(k as usize)
            }
        };
        Ok((
            per(self.control_period, "control period")?,
            per(self.sample_period, "sample period")?,
        ))
    }
}

/// What a controller sees at a control tick.
pub struct TickInput<'a> {
    pub xi: StateVector,
    pub broadcast: BroadcastSignal,
    pub failed: &'a [bool],
    pub acquire: bool,
    pub dt: f64,
}

pub struct TickOutput {
    pub commands: DVector<f64>,
    pub eta: Option<Vector4<f64>>,
    pub robots: Vec<RobotTrace>,
}

pub trait Controller {
    fn tick(&mut self, input: &TickInput<'_>) -> TickOutput;
}

impl Controller for ProposedController {
    fn tick(&mut self, input: &TickInput<'_>) -> TickOutput {
        let traces = ProposedController::tick(self, &input.broadcast, input.failed, input.acquire, input.dt);
        let mut eta = Vector4::zeros();
        for (rc, tr) in self.robots.iter().zip(&traces) {
            eta[rc.spec.quadrant - 1] = tr.eta;
        }
        TickOutput {
            commands: DVector::from_iterator(traces.len(), traces.iter().map(|t| t.thrust)),
            eta: Some(eta),
            robots: traces,
        }
    }
}

impl Controller for PidController {
    fn tick(&mut self, input: &TickInput<'_>) -> TickOutput {
        TickOutput {
            commands: self.step(&input.xi, input.dt),
            eta: None,
            robots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashCause {
    Attitude,
    Altitude,
    /// Non-finite state.
    Divergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrashReport {
    pub crashed: bool,
    pub time: f64,
    pub cause: Option<CrashCause>,
}

impl CrashReport {
    pub fn survived(horizon: f64) -> Self {
        Self {
            crashed: false,
            time: horizon,
            cause: None,
        }
    }
}

/// Attitude beyond ±90° (strict), then altitude below zero, then
/// divergence.
pub fn detect_crash(x: &StateVector) -> Option<CrashCause> {
    use std::f64::consts::FRAC_PI_2;
    if !x.iter().all(|v| v.is_finite()) {
        return Some(CrashCause::Divergence);
    }
    if x[idx::ROLL].abs() > FRAC_PI_2 || x[idx::PITCH].abs() > FRAC_PI_2 {
        Some(CrashCause::Attitude)
    } else if x[idx::Z] < 0.0 {
        Some(CrashCause::Altitude)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// World-frame position (body x, y rotated by ψ).
    pub world: Vector3<f64>,
    pub attitude: Vector3<f64>,
    pub commanded: DVector<f64>,
    pub actual: DVector<f64>,
    pub eta: Vector4<f64>,
    pub events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub xi: StateVector,
    pub eta: Option<Vector4<f64>>,
    pub robots: Vec<RobotTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub robot_ids: Vec<String>,
    pub sample_period: f64,
    pub samples: Vec<Sample>,
    pub ticks: Vec<TickRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub trajectory: Trajectory,
    pub crash: CrashReport,
    pub final_state: WorldState,
}

fn reference(target: &[f64; 4]) -> StateVector {
    let mut r = StateVector::zeros();
    r[idx::X] = target[0];
    r[idx::Y] = target[1];
    r[idx::Z] = target[2];
    r[idx::YAW] = target[3];
    r
}

fn world_position(x: &StateVector) -> Vector3<f64> {
    let (s, c) = x[idx::YAW].sin_cos();
    Vector3::new(c * x[idx::X] - s * x[idx::Y], s * x[idx::X] + c * x[idx::Y], x[idx::Z])
}

struct AccelEstimator {
    source: AccelSource,
    period: f64,
    previous: Option<Vector4<f64>>,
    rng: ChaCha8Rng,
}

impl AccelEstimator {
    fn new(settings: &SimSettings) -> Self {
        Self {
            source: settings.accel,
            period: settings.control_period,
            previous: None,
            rng: ChaCha8Rng::seed_from_u64(settings.seed),
        }
    }

    fn estimate(&mut self, plant: &Plant, state: &WorldState, cmd: &DVector<f64>) -> Vector4<f64> {
        match self.source {
            AccelSource::Exact => {
                let (dx, _) = plant.derivative(&state.x, &state.motor_thrusts, cmd);
                acceleration_rows(&dx)
            }
            AccelSource::Difference { noise_std } => {
                let x = &state.x;
                let rates = Vector4::new(x[idx::VZ], x[idx::P], x[idx::Q], x[idx::R]);
                let diff = self.previous.map_or(Vector4::zeros(), |p| (rates - p) / self.period);
                self.previous = Some(rates);
                if noise_std > 0.0 {
                    let normal = Normal::new(0.0, noise_std).expect("validated noise");
                    diff.map(|v| v + normal.sample(&mut self.rng))
                } else {
                    diff
                }
            }
        }
    }
}

/// Runs `scenario` with fixed-step RK4. Events with time `≤ t` are applied
/// before the control tick at `t`; commands are held between ticks.
pub fn run_scenario(
    config: &PayloadConfig,
    controller: &mut dyn Controller,
    scenario: &Scenario,
    settings: &SimSettings,
) -> Result<SimResult, SimError> {
    scenario.validate(config)?;
    let (ctrl_steps, sample_steps) = settings.validate()?;
    let n = config.robots.len();
    let com0 = Vector3::from(scenario.initial_com);
    let mut plant = Plant::new(config, settings.plant, scenario.initial_mass, &com0);
    let p0 = Vector3::from(scenario.initial_position);
    let mut state = WorldState::hover(config, p0, scenario.initial_yaw, scenario.initial_mass, com0);
    let mut target = [p0.x, p0.y, p0.z, scenario.initial_yaw];

    let total_steps = (scenario.horizon / settings.dt).round() as usize;
    let mut next_event = 0;
    let mut cmd = DVector::zeros(n);
    let mut eta = Vector4::zeros();
    let mut pending_tags: Vec<String> = Vec::new();
    let mut traj = Trajectory {
        robot_ids: config.robots.iter().map(|r| r.id.clone()).collect(),
        sample_period: settings.sample_period,
        samples: Vec::new(),
        ticks: Vec::new(),
    };
    let mut crash = CrashReport::survived(scenario.horizon);
    let mut estimator = AccelEstimator::new(settings);

    for step in 0..total_steps {
        let t = step as f64 * settings.dt;
        let mut acquire = false;
        let mut mass_or_com = false;
        while next_event < scenario.events.len() && scenario.events[next_event].time <= t + 0.5 * settings.dt {
            let ev = &scenario.events[next_event];
            match &ev.kind {
                EventKind::SetTarget { pose } => target = *pose,
                EventKind::ShiftCom { com } => {
                    state.true_com = Vector3::from(*com);
                    mass_or_com = true;
                }
                EventKind::ChangeMass { mass } => {
                    state.true_mass = *mass;
                    mass_or_com = true;
                }
                EventKind::FailRobot { id } => {
                    let j = config.robots.iter().position(|r| &r.id == id).expect("validated id");
                    state.failed[j] = true;
                    cmd[j] = 0.0;
                }
                EventKind::AcquireU0 => acquire = true,
            }
            pending_tags.push(ev.tag());
            next_event += 1;
        }
        if mass_or_com {
            plant.rebuild(state.true_mass, &state.true_com);
        }

        if step % ctrl_steps == 0 {
            let xi = state.x - reference(&target);
            let accel = estimator.estimate(&plant, &state, &cmd);
            let broadcast = BroadcastSignal {
                xi,
                accel_z: accel[0],
                accel_ang: Vector3::new(accel[1], accel[2], accel[3]),
            };
            let out = controller.tick(&TickInput {
                xi,
                broadcast,
                failed: &state.failed,
                acquire,
                dt: settings.control_period,
            });
            cmd = out.commands;
            for j in 0..n {
                if state.failed[j] {
                    cmd[j] = 0.0;
                }
            }
            if step == 0 || settings.plant.motor_time_constant.is_none() {
                state.motor_thrusts = cmd.clone();
                plant.clip(&mut state.motor_thrusts);
            }
            if let Some(e) = out.eta {
                eta = e;
            }
            if settings.record_ticks {
                traj.ticks.push(TickRecord {
                    t,
                    xi,
                    eta: out.eta,
                    robots: out.robots,
                });
            }
        }

        if step % sample_steps == 0 {
            traj.samples.push(Sample {
                t,
                world: world_position(&state.x),
                attitude: state.x.fixed_rows::<3>(idx::ROLL).into_owned(),
                commanded: cmd.clone(),
                actual: state.motor_thrusts.clone(),
                eta,
                events: std::mem::take(&mut pending_tags),
            });
        }

        plant.rk4(&mut state, &cmd, settings.dt);
        if let Some(cause) = detect_crash(&state.x) {
            crash = CrashReport {
                crashed: true,
                time: state.t,
                cause: Some(cause),
            };
            break;
        }
    }
    Ok(SimResult {
        trajectory: traj,
        crash,
        final_state: state,
    })
}

/// Formats with 9 significant digits, fixed notation for moderate
/// magnitudes.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.8e}")
    }
}

impl Trajectory {
    pub fn csv_header(&self) -> String {
        let mut h = String::from("t,X,Y,Z,phi,theta,psi");
        for id in &self.robot_ids {
            let _ = write!(h, ",u_cmd_{id}");
        }
        for id in &self.robot_ids {
            let _ = write!(h, ",u_act_{id}");
        }
        h.push_str(",eta_1,eta_2,eta_3,eta_4,event");
        h
    }

    /// CSV per the documented column order with the crash report as a
    /// trailing comment line.
    pub fn to_csv(&self, crash: &CrashReport) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for s in &self.samples {
            let mut row = vec![fmt_sig(s.t)];
            row.extend(s.world.iter().chain(s.attitude.iter()).map(|v| fmt_sig(*v)));
            row.extend(s.commanded.iter().chain(s.actual.iter()).map(|v| fmt_sig(*v)));
            row.extend(s.eta.iter().map(|v| fmt_sig(*v)));
            row.push(s.events.join(";"));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let _ = match crash.cause {
            Some(cause) => writeln!(
                out,
                "# crash: crashed=true time={} cause={}",
                fmt_sig(crash.time),
                match cause {
                    CrashCause::Attitude => "attitude",
                    CrashCause::Altitude => "altitude",
                    CrashCause::Divergence => "divergence",
                }
            ),
            None => writeln!(out, "# crash: crashed=false time={}", fmt_sig(crash.time)),
        };
        out
    }

    /// Time series of one logged scalar, for metrics.
    pub fn series(&self, f: impl Fn(&Sample) -> f64) -> (Vec<f64>, Vec<f64>) {
        self.samples.iter().map(|s| (s.t, f(s))).unzip()
    }
}
