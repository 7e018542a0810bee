//! The four pipelines behind the subcommands. Each returns a structured
//! outcome and writes its artifacts into an output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use cotrans_control::{ControlConstants, PidController, PidParams, ProposedController};
use cotrans_core::archive::{design_from_archive, design_to_archive, MatrixArchive};
use cotrans_core::design::{enumerate_vertices, solve_design, verify_all, verify_spr, RfcDesign, SprReport};
use cotrans_core::error::{ArchiveError, DesignError};
use cotrans_core::model::{build_output_model, build_state_space, LinearModel, OutputModel};
use cotrans_sim::{
    fmt_sig, run_scenario, step_rise, tune_pid, Axis, CrashCause, CrashReport, PidTuneReport, SimResult, StepProtocol,
};

use crate::config::RunConfig;
use crate::plots::trajectory_svg;
use crate::CliError;

/// SPR margin every vertex must clear.
const VERIFY_MARGIN: f64 = 1e-6;

fn design_error(e: DesignError) -> CliError {
    match e {
        DesignError::Model(_) | DesignError::PoleRegion(_) | DesignError::UncertaintyBox(_) => {
            CliError::Validation(e.to_string())
        }
        DesignError::Infeasible { .. } | DesignError::Solver { .. } | DesignError::Certification { .. } => {
            CliError::Solver(e.to_string())
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn models(cfg: &RunConfig) -> Result<(LinearModel, OutputModel), CliError> {
    let model = build_state_space(&cfg.payload).map_err(invalid)?;
    let outputs = build_output_model(&cfg.payload, &cfg.outputs).map_err(invalid)?;
    Ok((model, outputs))
}

fn write_file(out: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Output(format!("cannot create {}: {e}", out.display())))?;
    let path = out.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

pub struct DesignOutcome {
    pub design: RfcDesign,
    pub vertices: Vec<SprReport>,
    pub nominal: SprReport,
    pub elapsed: Duration,
}

impl DesignOutcome {
    pub fn all_pass(&self) -> bool {
        self.vertices.iter().all(|r| r.pass) && self.nominal.poles_in_region
    }
}

/// Synthesizes and verifies the design without writing anything.
pub fn run_design(cfg: &RunConfig) -> Result<DesignOutcome, CliError> {
    let start = Instant::now();
    let (model, outputs) = models(cfg)?;
    let vertices = enumerate_vertices(&model, &cfg.uncertainty_box()).map_err(design_error)?;
    let design = solve_design(
        &vertices,
        &model,
        &outputs,
        &cfg.design.pole_region,
        &cfg.design.options,
    )
    .map_err(design_error)?;
    let (vertices, nominal) = verify_design(cfg, &design)?;
    Ok(DesignOutcome {
        design,
        vertices,
        nominal,
        elapsed: start.elapsed(),
    })
}

/// Checks every vertex of the configured box and the nominal model
/// against `design`.
pub fn verify_design(cfg: &RunConfig, design: &RfcDesign) -> Result<(Vec<SprReport>, SprReport), CliError> {
    let (model, outputs) = models(cfg)?;
    let vertices = enumerate_vertices(&model, &cfg.uncertainty_box()).map_err(design_error)?;
    let reports = verify_all(design, &vertices, &model, &outputs, VERIFY_MARGIN);
    let nominal = verify_spr(design, &model.b_quad, &model, &outputs, VERIFY_MARGIN, "nominal");
    Ok((reports, nominal))
}

fn complex_list(report: &SprReport) -> Vec<String> {
    let mut ev = report.closed_loop_eigenvalues.clone();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    ev.iter()
        .map(|c| {
            let im = if c.im.abs() < 1e-12 { 0.0 } else { c.im };
            format!("{:>12.6} {:+.6}i", c.re, im)
        })
        .collect()
}

/// Human-readable feasibility report. Contains no timings, so reruns on the
/// same inputs are byte-identical.
pub fn design_report(name: &str, design: &RfcDesign, vertices: &[SprReport], nominal: &SprReport) -> String {
    let mut s = String::new();
    let passed = vertices.iter().filter(|r| r.pass).count();
    let worst = vertices
        .iter()
        .min_by(|a, b| a.worst_margin().total_cmp(&b.worst_margin()));
    let r = design.region;
    let _ = writeln!(s, "design: {name}");
    let _ = writeln!(s, "kappa: {}", fmt_sig(design.kappa));
    let _ = writeln!(s, "pole region: tau1={} tau2={} tau3={}", r.tau1, r.tau2, r.tau3);
    let _ = writeln!(s, "vertices verified: {passed}/{}", vertices.len());
    if let Some(w) = worst {
        let _ = writeln!(s, "worst vertex: {} margin {:.3e}", w.label, w.worst_margin());
    }
    let _ = writeln!(
        s,
        "nominal closed loop: poles in region = {}, riccati max eig = {:.3e}",
        nominal.poles_in_region, nominal.riccati_max_eig
    );
    for line in complex_list(nominal) {
        let _ = writeln!(s, "  {line}");
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<28} {:>11} {:>11} {:>11} {:>11} {:>11} {:>6} {:>5}",
        "vertex", "lmi", "decay_min", "decay_max", "cone", "riccati", "poles", "pass"
    );
    for v in vertices {
        let _ = writeln!(
            s,
            "{:<28} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>6} {:>5}",
            v.label,
            v.lmi_margin,
            v.min_decay_margin,
            v.max_decay_margin,
            v.cone_margin,
            v.riccati_max_eig,
            v.poles_in_region,
            v.pass
        );
    }
    s
}

fn verification_failure(vertices: &[SprReport], nominal: &SprReport) -> Option<String> {
    let failed: Vec<&SprReport> = vertices.iter().filter(|r| !r.pass).collect();
    if let Some(w) = failed
        .iter()
        .min_by(|a, b| a.worst_margin().total_cmp(&b.worst_margin()))
    {
        return Some(format!(
            "{} of {} vertices fail verification; worst is {} (margin {:.3e}, riccati {:.3e}, poles in region {})",
            failed.len(),
            vertices.len(),
            w.label,
            w.worst_margin(),
            w.riccati_max_eig,
            w.poles_in_region
        ));
    }
    if !nominal.poles_in_region {
        return Some("nominal closed-loop poles leave the region".into());
    }
    None
}

/// Writes `design.txt` (the matrix archive) and `design_report.txt`.
pub fn cmd_design(cfg: &RunConfig, out: &Path) -> Result<DesignOutcome, CliError> {
    let outcome = run_design(cfg)?;
    let report = design_report(&cfg.name, &outcome.design, &outcome.vertices, &outcome.nominal);
    write_file(out, "design_report.txt", &report)?;
    if let Some(msg) = verification_failure(&outcome.vertices, &outcome.nominal) {
        return Err(CliError::Solver(msg));
    }
    write_file(out, "design.txt", &design_to_archive(&outcome.design).to_text())?;
    Ok(outcome)
}

/// Reads an archive and checks it against the configured payload.
pub fn load_design(cfg: &RunConfig, path: &Path) -> Result<RfcDesign, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read design {}: {e}", path.display())))?;
    let archive = MatrixArchive::parse(&text).map_err(invalid)?;
    let design = design_from_archive(&archive).map_err(|e| match e {
        ArchiveError::Shape { .. } => CliError::Dimension(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    })?;
    let counts = cfg.payload.robot_counts();
    if design.robot_counts != counts {
        return Err(CliError::Dimension(format!(
            "design was made for robot counts {:?}, the payload has {:?}",
            design.robot_counts, counts
        )));
    }
    Ok(design)
}

pub struct VerifyOutcome {
    pub vertices: Vec<SprReport>,
    pub nominal: SprReport,
}

/// Re-checks an archived design and writes `verify_report.txt`.
pub fn cmd_verify(cfg: &RunConfig, design: &RfcDesign, out: &Path) -> Result<VerifyOutcome, CliError> {
    let (vertices, nominal) = verify_design(cfg, design)?;
    write_file(
        out,
        "verify_report.txt",
        &design_report(&cfg.name, design, &vertices, &nominal),
    )?;
    match verification_failure(&vertices, &nominal) {
        Some(msg) => Err(CliError::Solver(msg)),
        None => Ok(VerifyOutcome { vertices, nominal }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Proposed,
    Pid,
}

impl ControllerKind {
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Proposed => "proposed",
            ControllerKind::Pid => "pid",
        }
    }
}

pub fn proposed_controller(cfg: &RunConfig, design: &RfcDesign) -> Result<ProposedController, CliError> {
    let (_, outputs) = models(cfg)?;
    ProposedController::new(
        &cfg.payload.robots,
        ControlConstants::new(design, &outputs),
        &cfg.controller_params(),
        cfg.payload.gravity,
    )
    .map_err(invalid)
}

/// Step rising times `[X, Y, Z, ψ]` of the proposed controller, one thread
/// per axis.
pub fn proposed_rise_times(cfg: &RunConfig, design: &RfcDesign) -> Result<[f64; 4], CliError> {
    let template = proposed_controller(cfg, design)?;
    let protocol = StepProtocol::proposed();
    let results: Vec<Result<f64, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = Axis::ALL
            .map(|axis| {
                let mut ctrl = template.clone();
                s.spawn(move || {
                    step_rise(&cfg.payload, &mut ctrl, axis, &protocol, &cfg.sim)
                        .map_err(|e| CliError::Crash(format!("proposed {} step: {e}", axis.label())))
                })
            })
            .into_iter()
            .collect();
        handles.into_iter().map(|h| h.join().expect("step thread")).collect()
    });
    let mut out = [0.0; 4];
    for (k, r) in results.into_iter().enumerate() {
        out[k] = r?;
    }
    Ok(out)
}

/// PID parameters from fixed bandwidths if the config has them, otherwise
/// tuned against the proposed controller's rising times.
pub fn pid_params(cfg: &RunConfig, design: &RfcDesign) -> Result<(PidParams, Option<PidTuneReport>), CliError> {
    if let Some(w) = cfg.pid.bandwidths {
        return Ok((cfg.pid.tuning.params(&cfg.payload, w), None));
    }
    let reference = proposed_rise_times(cfg, design)?;
    let report = tune_pid(
        &cfg.payload,
        reference,
        cfg.pid.preferred_rise,
        &cfg.pid.tuning,
        &cfg.sim,
    )
    .map_err(invalid)?;
    Ok((report.params.clone(), Some(report)))
}

pub struct SimOutcome {
    pub result: SimResult,
    pub csv: String,
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
}

pub fn crash_line(crash: &CrashReport) -> String {
    match crash.cause {
        Some(cause) => format!("crashed at {:.2} s ({})", crash.time, cause_label(cause)),
        None => format!("survived {:.2} s", crash.time),
    }
}

fn cause_label(c: CrashCause) -> &'static str {
    match c {
        CrashCause::Attitude => "attitude",
        CrashCause::Altitude => "altitude",
        CrashCause::Divergence => "divergence",
    }
}

fn simulate_with(
    cfg: &RunConfig,
    controller: &mut dyn cotrans_sim::Controller,
    kind: ControllerKind,
    out: &Path,
) -> Result<SimOutcome, CliError> {
    let result = run_scenario(&cfg.payload, controller, &cfg.scenario, &cfg.sim).map_err(invalid)?;
    let csv = result.trajectory.to_csv(&result.crash);
    let csv_path = write_file(out, &format!("{}.csv", kind.label()), &csv)?;
    let title = format!(
        "{} / {} controller: {}",
        cfg.name,
        kind.label(),
        crash_line(&result.crash)
    );
    let svg_path = write_file(
        out,
        &format!("{}.svg", kind.label()),
        &trajectory_svg(&result.trajectory, &title)?,
    )?;
    Ok(SimOutcome {
        result,
        csv,
        csv_path,
        svg_path,
    })
}

/// Runs the configured scenario and writes `<controller>.csv` and
/// `<controller>.svg`. With `require_survival` a crash is an error.
pub fn cmd_simulate(
    cfg: &RunConfig,
    design: &RfcDesign,
    kind: ControllerKind,
    require_survival: bool,
    out: &Path,
) -> Result<SimOutcome, CliError> {
    let outcome = match kind {
        ControllerKind::Proposed => simulate_with(cfg, &mut proposed_controller(cfg, design)?, kind, out)?,
        ControllerKind::Pid => {
            let (params, _) = pid_params(cfg, design)?;
            let mut pid = PidController::new(&cfg.payload.robots, params, cfg.payload.gravity).map_err(invalid)?;
            simulate_with(cfg, &mut pid, kind, out)?
        }
    };
    if require_survival && outcome.result.crash.crashed {
        return Err(CliError::Crash(format!(
            "{} controller {}",
            kind.label(),
            crash_line(&outcome.result.crash)
        )));
    }
    Ok(outcome)
}

pub struct Comparison {
    pub name: String,
    pub proposed_rise: [f64; 4],
    pub tuning: PidTuneReport,
    pub proposed_crash: CrashReport,
    pub pid_crash: CrashReport,
}

/// Step responses of the proposed controller, PID tuning against them, then
/// the configured scenario for both controllers side by side. Writes
/// `compare.txt` and the CSV and SVG of both scenario runs.
pub fn cmd_compare(cfg: &RunConfig, design: &RfcDesign, out: &Path) -> Result<Comparison, CliError> {
    let proposed_rise = proposed_rise_times(cfg, design)?;
    let tuning = tune_pid(
        &cfg.payload,
        proposed_rise,
        cfg.pid.preferred_rise,
        &cfg.pid.tuning,
        &cfg.sim,
    )
    .map_err(invalid)?;
    let mut proposed = proposed_controller(cfg, design)?;
    let mut pid =
        PidController::new(&cfg.payload.robots, tuning.params.clone(), cfg.payload.gravity).map_err(invalid)?;
    let (a, b) = std::thread::scope(|s| {
        let a = s.spawn(|| simulate_with(cfg, &mut proposed, ControllerKind::Proposed, out));
        let b = s.spawn(|| simulate_with(cfg, &mut pid, ControllerKind::Pid, out));
        (a.join().expect("scenario thread"), b.join().expect("scenario thread"))
    });
    let cmp = Comparison {
        name: cfg.name.clone(),
        proposed_rise,
        tuning,
        proposed_crash: a?.result.crash,
        pid_crash: b?.result.crash,
    };
    write_file(out, "compare.txt", &comparison_table(&cmp))?;
    Ok(cmp)
}

fn rise_cell(t: Option<f64>) -> String {
    t.map_or("-".into(), |t| format!("{t:.2}"))
}

/// Rising-time table (controllers by row, axes by column), followed
/// by tuning status and scenario outcomes.
pub fn comparison_table(c: &Comparison) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}: rising time [s]", c.name);
    let _ = writeln!(s, "{:<10} {:>7} {:>7} {:>7} {:>7}", "", "X", "Y", "Z", "psi");
    let ours: Vec<String> = c.proposed_rise.iter().map(|t| rise_cell(Some(*t))).collect();
    let _ = writeln!(
        s,
        "{:<10} {:>7} {:>7} {:>7} {:>7}",
        "Ours", ours[0], ours[1], ours[2], ours[3]
    );
    let pid: Vec<String> = c.tuning.axes.iter().map(|a| rise_cell(a.rise)).collect();
    let _ = writeln!(
        s,
        "{:<10} {:>7} {:>7} {:>7} {:>7}",
        "PID", pid[0], pid[1], pid[2], pid[3]
    );
    let delta: Vec<String> = c
        .tuning
        .axes
        .iter()
        .map(|a| {
            a.rise
                .map_or("-".into(), |t| format!("{:+.1}%", 100.0 * (t / a.reference - 1.0)))
        })
        .collect();
    let _ = writeln!(
        s,
        "{:<10} {:>7} {:>7} {:>7} {:>7}",
        "PID-Ours", delta[0], delta[1], delta[2], delta[3]
    );
    let bw: Vec<String> = c.tuning.axes.iter().map(|a| format!("{:.3}", a.omega)).collect();
    let _ = writeln!(
        s,
        "PID bandwidths [rad/s]: X {} Y {} Z {} psi {}",
        bw[0], bw[1], bw[2], bw[3]
    );
    if c.tuning.converged {
        let _ = writeln!(s, "PID tuning: converged");
    } else {
        let off: Vec<&str> = c
            .tuning
            .axes
            .iter()
            .filter(|a| !a.within)
            .map(|a| a.axis.label())
            .collect();
        let _ = writeln!(s, "PID tuning: NOT converged on {} (best effort shown)", off.join(", "));
    }
    let _ = writeln!(s, "scenario:");
    let _ = writeln!(s, "  Ours  {}", crash_line(&c.proposed_crash));
    let _ = writeln!(s, "  PID   {}", crash_line(&c.pid_crash));
    s
}
