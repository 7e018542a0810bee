use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use cotrans::commands::{Comparison, ControllerKind};
use cotrans::{cmd_design, cmd_simulate, cmd_verify, comparison_table, load_design, CliError, RunConfig};
use cotrans_core::design::RfcDesign;
use cotrans_sim::{AccelSource, Axis, AxisTuning, CrashReport, EventKind, PidTuneReport, PidTuning};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.toml"))
}

fn tmp(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name)
}

/// Rectangle with a reduced box (mass 3..4, nominal COM only) so the design
/// solves in seconds.
fn small_config() -> RunConfig {
    let mut cfg = RunConfig::load(&config_path("rectangle")).unwrap();
    cfg.design.mass_range = [3.0, 4.0];
    cfg.design.com_vertices = vec![[0.0; 3]];
    cfg.pid.bandwidths = Some([0.6, 0.6, 0.85, 0.75]);
    cfg
}

fn write_config(cfg: &RunConfig, name: &str) -> PathBuf {
    let path = tmp(name).with_extension("toml");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(&path, toml::to_string(cfg).unwrap()).unwrap();
    path
}

fn small_design() -> &'static (RunConfig, PathBuf, RfcDesign) {
    static D: OnceLock<(RunConfig, PathBuf, RfcDesign)> = OnceLock::new();
    D.get_or_init(|| {
        let cfg = small_config();
        let out = tmp("small_design");
        let outcome = cmd_design(&cfg, &out).unwrap();
        (cfg, out.join("design.txt"), outcome.design)
    })
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cotrans"))
}

#[test]
fn shipped_configs_load_and_validate() {
    for name in ["rectangle", "lshape"] {
        let cfg = RunConfig::load(&config_path(name)).unwrap();
        assert_eq!(cfg.name, name);
        assert_eq!(cfg.uncertainty_box().com_vertices.len(), 4);
        assert!(cfg.controller.is_some());
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let text = std::fs::read_to_string(config_path("rectangle")).unwrap();
    let err = RunConfig::from_toml(&text.replace("[controller]", "[controller]\nspeed = 3")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn missing_config_is_a_validation_error() {
    let err = RunConfig::load(Path::new("/nonexistent/run.toml")).unwrap_err();
    assert!(matches!(err, CliError::Validation(_)));
}

#[test]
fn inverted_pole_region_exits_with_code_2() {
    let mut cfg = small_config();
    cfg.design.pole_region.tau1 = 200.0;
    let path = write_config(&cfg, "inverted_region");
    let status = bin()
        .args(["design", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(tmp("inverted_out"))
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("pole region"));
}

#[test]
fn dt_coarser_than_motor_lag_exits_with_code_2() {
    let path = write_config(&small_config(), "coarse_dt");
    let status = bin()
        .args(["simulate", "--dt", "0.005", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn design_reruns_are_byte_identical_and_verify() {
    let (cfg, first, design) = small_design();
    let again = tmp("small_design_again");
    cmd_design(cfg, &again).unwrap();
    assert_eq!(
        std::fs::read(first).unwrap(),
        std::fs::read(again.join("design.txt")).unwrap()
    );
    let report = std::fs::read_to_string(again.join("design_report.txt")).unwrap();
    assert!(report.contains("vertices verified: 32/32"));

    let loaded = load_design(cfg, first).unwrap();
    assert_eq!(&loaded, design);
    let v = cmd_verify(cfg, &loaded, &tmp("small_verify")).unwrap();
    assert!(v.vertices.iter().all(|r| r.pass));
}

#[test]
fn archive_for_another_payload_is_a_dimension_mismatch() {
    let (_, path, _) = small_design();
    let lshape = RunConfig::load(&config_path("lshape")).unwrap();
    let err = load_design(&lshape, path).unwrap_err();
    assert_eq!(err.exit_code(), 3);

    let status = bin()
        .args(["verify", "--config"])
        .arg(config_path("lshape"))
        .arg("--design")
        .arg(path)
        .arg("--out")
        .arg(tmp("mismatch_out"))
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(3));
}

#[test]
fn zero_horizon_writes_header_only() {
    let (cfg, _, design) = small_design();
    let mut cfg = cfg.clone();
    cfg.scenario.horizon = 0.0;
    cfg.scenario.events.clear();
    let out = cmd_simulate(&cfg, design, ControllerKind::Proposed, true, &tmp("zero_horizon")).unwrap();
    let lines: Vec<&str> = out.csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("t,X,Y,Z,phi,theta,psi"));
    assert!(lines[1].starts_with("# crash: crashed=false"));
    assert!(out.svg_path.exists());
}

#[test]
fn equal_seeds_give_identical_csv_and_different_seeds_do_not() {
    let (cfg, _, design) = small_design();
    let mut cfg = cfg.clone();
    cfg.scenario.horizon = 3.0;
    cfg.scenario.events.retain(|e| e.time <= 3.0);
    cfg.sim.accel = AccelSource::Difference { noise_std: 0.05 };
    let run = |seed: u64, dir: &str| {
        let mut c = cfg.clone();
        c.sim.seed = seed;
        cmd_simulate(&c, design, ControllerKind::Proposed, false, &tmp(dir))
            .unwrap()
            .csv
    };
    let a = run(3, "seed_a");
    assert_eq!(a, run(3, "seed_b"));
    assert_ne!(a, run(4, "seed_c"));
}

#[test]
fn crash_in_required_survival_exits_with_code_1() {
    let (cfg, path, _) = small_design();
    let mut cfg = cfg.clone();
    // Far too heavy for the robots to lift.
    cfg.scenario.initial_mass = 20.0;
    cfg.scenario
        .events
        .retain(|e| !matches!(e.kind, EventKind::ChangeMass { .. }));
    cfg.scenario.horizon = 5.0;
    cfg.scenario.events.retain(|e| e.time <= 5.0);
    let config = write_config(&cfg, "heavy");
    let run = |extra: &[&str]| {
        bin()
            .arg("simulate")
            .args(extra)
            .arg("--config")
            .arg(&config)
            .arg("--design")
            .arg(path)
            .arg("--out")
            .arg(tmp("heavy_out"))
            .output()
            .unwrap()
    };
    let strict = run(&["--require-survival"]);
    assert_eq!(strict.status.code(), Some(1));
    let lenient = run(&[]);
    assert_eq!(lenient.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&lenient.stdout).contains("crashed at"));
}

#[test]
fn pid_with_fixed_bandwidths_skips_tuning() {
    let (cfg, _, design) = small_design();
    let mut cfg = cfg.clone();
    cfg.scenario.horizon = 2.0;
    cfg.scenario.events.clear();
    let (params, report) = cotrans::pid_params(&cfg, design).unwrap();
    assert!(report.is_none());
    assert_eq!(params, cfg.pid.tuning.params(&cfg.payload, [0.6, 0.6, 0.85, 0.75]));
    let out = cmd_simulate(&cfg, design, ControllerKind::Pid, true, &tmp("pid_fixed")).unwrap();
    assert!(out.csv_path.ends_with("pid.csv"));
}

#[test]
fn self_comparison_has_zero_deltas() {
    let cfg = small_config();
    let reference = [2.5, 2.6, 2.1, 2.2];
    let params = PidTuning::default().params(&cfg.payload, [1.0; 4]);
    let axes = Axis::ALL.map(|axis| AxisTuning {
        axis,
        omega: 1.0,
        rise: Some(reference[axis as usize]),
        aim: reference[axis as usize],
        reference: reference[axis as usize],
        within: true,
    });
    let table = comparison_table(&Comparison {
        name: "self".into(),
        proposed_rise: reference,
        tuning: PidTuneReport {
            params,
            axes,
            converged: true,
        },
        proposed_crash: CrashReport::survived(100.0),
        pid_crash: CrashReport::survived(100.0),
    });
    let delta = table.lines().find(|l| l.starts_with("PID-Ours")).unwrap();
    assert_eq!(delta.matches("+0.0%").count(), 4, "{table}");
    assert!(table.contains("PID tuning: converged"));
}
