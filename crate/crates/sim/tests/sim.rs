use cotrans_control::{ControlConstants, PidController, ProposedController, ProposedParams};
use cotrans_core::model::{build_output_model, build_state_space, idx, StateMatrix, StateVector};
use cotrans_core::presets;
use cotrans_sim::*;
use nalgebra::{DMatrix, DVector, SMatrix, Vector3};
use proptest::prelude::*;

/// Zero gains: every robot holds the equal share of `mass`.
fn idle_controller(cfg: &cotrans_core::model::PayloadConfig, mass: f64) -> ProposedController {
    let om = build_output_model(cfg, &presets::rectangle_outputs()).unwrap();
    let consts = ControlConstants {
        f: SMatrix::<f64, 4, 12>::zeros(),
        g: nalgebra::Matrix4::zeros(),
        c: om.c,
        d_hat: om.d_hat,
    };
    let params = ProposedParams {
        initial_mass: mass,
        ..ProposedParams::default()
    };
    ProposedController::new(&cfg.robots, consts, &params, cfg.gravity).unwrap()
}

fn hover(mass: f64, horizon: f64) -> Scenario {
    Scenario {
        initial_position: [0.0, 0.0, 2.0],
        initial_yaw: 0.0,
        initial_mass: mass,
        initial_com: [0.0; 3],
        horizon,
        events: Vec::new(),
    }
}

#[test]
fn hover_persists_without_events() {
    let cfg = presets::rectangle_payload();
    let mut ctrl = idle_controller(&cfg, 3.2);
    let r = run_scenario(&cfg, &mut ctrl, &hover(3.2, 10.0), &SimSettings::default()).unwrap();
    assert!(!r.crash.crashed);
    let x = r.final_state.x;
    let mut expect = StateVector::zeros();
    expect[idx::Z] = 2.0;
    assert!((x - expect).amax() < 1e-9, "{}", (x - expect).amax());
    assert_eq!(r.trajectory.samples.len(), 1000);
    assert!((r.final_state.t - 10.0).abs() < 1e-9);
}

#[test]
fn zero_horizon_gives_header_only() {
    let cfg = presets::rectangle_payload();
    let mut ctrl = idle_controller(&cfg, 3.5);
    let r = run_scenario(&cfg, &mut ctrl, &hover(3.5, 0.0), &SimSettings::default()).unwrap();
    let csv = r.trajectory.to_csv(&r.crash);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("t,X,Y,Z,phi,theta,psi,u_cmd_r1,"));
    assert!(lines[0].ends_with("eta_1,eta_2,eta_3,eta_4,event"));
    assert_eq!(lines[1], "# crash: crashed=false time=0");
}

#[test]
fn csv_columns_follow_robot_order() {
    let cfg = presets::lshape_payload();
    let mut ctrl = idle_controller(&cfg, 3.5);
    let r = run_scenario(&cfg, &mut ctrl, &hover(3.5, 0.05), &SimSettings::default()).unwrap();
    let csv = r.trajectory.to_csv(&r.crash);
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 7 + 2 * 10 + 5);
    assert_eq!(header[7], "u_cmd_l1");
    assert_eq!(header[17], "u_act_l1");
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), header.len());
    assert_eq!(row[0], "0");
    assert_eq!(row[3], "2");
}

#[test]
fn mass_and_com_events_are_atomic_and_keep_state_continuous() {
    let cfg = presets::rectangle_payload();
    let mut sc = hover(3.5, 1.0);
    sc.events = vec![
        ScenarioEvent::new(0.5, EventKind::ShiftCom { com: [0.01, 0.05, 0.0] }),
        ScenarioEvent::new(0.5, EventKind::ChangeMass { mass: 4.0 }),
    ];
    let settings = SimSettings {
        sample_period: 1e-4,
        ..SimSettings::default()
    };
    let mut ctrl = idle_controller(&cfg, 3.5);
    let r = run_scenario(&cfg, &mut ctrl, &sc, &settings).unwrap();
    let k = r.trajectory.samples.iter().position(|s| !s.events.is_empty()).unwrap();
    assert_eq!(r.trajectory.samples[k].events, vec!["shift_com", "change_mass"]);
    assert!((r.trajectory.samples[k].t - 0.5).abs() < 1e-9);
    // Before the event the payload was hovering; positions do not jump.
    let (a, b) = (&r.trajectory.samples[k - 1], &r.trajectory.samples[k]);
    assert!((a.world - b.world).amax() < 1e-9);
    assert!((a.attitude - b.attitude).amax() < 1e-9);
    // Afterwards the heavier payload starts to sink.
    assert!(r.trajectory.samples.last().unwrap().world.z < 2.0 - 1e-3);
}

#[test]
fn failed_robot_is_commanded_zero() {
    let cfg = presets::lshape_payload();
    let mut sc = hover(3.5, 0.2);
    sc.events = vec![ScenarioEvent::new(0.1, EventKind::FailRobot { id: "l8".into() })];
    let mut ctrl = idle_controller(&cfg, 3.5);
    let r = run_scenario(&cfg, &mut ctrl, &sc, &SimSettings::default()).unwrap();
    let last = r.trajectory.samples.last().unwrap();
    assert_eq!(last.commanded[7], 0.0);
    assert!(last.actual[7] < 0.01 * last.actual[6]);
    assert!(r.final_state.failed[7]);
}

#[test]
fn scenario_validation() {
    let cfg = presets::rectangle_payload();
    let mut ctrl = idle_controller(&cfg, 3.5);
    let mut sc = hover(3.5, 1.0);
    sc.events = vec![ScenarioEvent::new(0.1, EventKind::FailRobot { id: "nope".into() })];
    assert!(matches!(
        run_scenario(&cfg, &mut ctrl, &sc, &SimSettings::default()),
        Err(SimError::Scenario(_))
    ));
    sc.events = vec![
        ScenarioEvent::new(0.5, EventKind::AcquireU0),
        ScenarioEvent::new(0.1, EventKind::AcquireU0),
    ];
    assert!(run_scenario(&cfg, &mut ctrl, &sc, &SimSettings::default()).is_err());
    let coarse = SimSettings {
        dt: 0.002,
        ..SimSettings::default()
    };
    assert!(matches!(
        run_scenario(&cfg, &mut ctrl, &hover(3.5, 1.0), &coarse),
        Err(SimError::Settings(_))
    ));
}

#[test]
fn scenario_files_round_trip_through_serde() {
    let sc = Scenario::disturbance([0.01, 0.08, 0.0], "r1");
    let text = toml::to_string(&sc).unwrap();
    assert!(text.contains("kind = \"fail_robot\""));
    let back: Scenario = toml::from_str(&text).unwrap();
    assert_eq!(back, sc);
}

#[test]
fn free_fall_when_every_robot_fails() {
    let cfg = presets::rectangle_payload();
    let mut sc = hover(3.5, 0.5);
    sc.events = cfg
        .robots
        .iter()
        .map(|r| ScenarioEvent::new(0.0, EventKind::FailRobot { id: r.id.clone() }))
        .collect();
    let settings = SimSettings {
        plant: PlantOptions::linear(),
        ..SimSettings::default()
    };
    let mut ctrl = idle_controller(&cfg, 3.5);
    let r = run_scenario(&cfg, &mut ctrl, &sc, &settings).unwrap();
    let z = r.final_state.x[idx::Z];
    assert!((z - (2.0 - 0.5 * 9.81 * 0.25)).abs() < 1e-9, "{z}");
}

#[test]
fn crash_stops_the_run_with_altitude_cause() {
    let cfg = presets::rectangle_payload();
    let mut sc = hover(3.5, 5.0);
    sc.events = cfg
        .robots
        .iter()
        .map(|r| ScenarioEvent::new(0.0, EventKind::FailRobot { id: r.id.clone() }))
        .collect();
    let mut ctrl = idle_controller(&cfg, 3.5);
    let r = run_scenario(&cfg, &mut ctrl, &sc, &SimSettings::default()).unwrap();
    assert!(r.crash.crashed);
    assert_eq!(r.crash.cause, Some(CrashCause::Altitude));
    // z = 2 − g t²/2 reaches zero at t = sqrt(4/g).
    assert!((r.crash.time - (4.0f64 / 9.81).sqrt()).abs() < 2e-3);
    assert!(r.trajectory.to_csv(&r.crash).ends_with("cause=altitude\n"));
}

#[test]
fn open_loop_run_matches_matrix_exponential() {
    // Held commands, linear plant: the exact solution is the zero-order-hold
    // map exp([[A, I], [0, 0]]·t) applied to (ξ₀, B u + w).
    let cfg = presets::rectangle_payload();
    let model = build_state_space(&cfg).unwrap();
    let plant = Plant::new(&cfg, PlantOptions::linear(), 3.5, &Vector3::zeros());
    let n = cfg.robots.len();
    let hover_share = 3.5 * 9.81 / n as f64;
    let cmd = DVector::from_fn(n, |j, _| hover_share + 0.004 * (j as f64 - 3.5));

    struct Fixed(DVector<f64>);
    impl Controller for Fixed {
        fn tick(&mut self, _: &TickInput<'_>) -> TickOutput {
            TickOutput {
                commands: self.0.clone(),
                eta: None,
                robots: Vec::new(),
            }
        }
    }
    let settings = SimSettings {
        plant: PlantOptions::linear(),
        ..SimSettings::default()
    };
    let r = run_scenario(&cfg, &mut Fixed(cmd.clone()), &hover(3.5, 1.0), &settings).unwrap();

    let mut m = DMatrix::zeros(24, 24);
    m.view_mut((0, 0), (12, 12)).copy_from(&model.a);
    m.view_mut((0, 12), (12, 12)).copy_from(&StateMatrix::identity());
    let phi = (m * 1.0).exp();
    let drive = plant.input_matrix() * &cmd + model.w;
    let mut x0 = StateVector::zeros();
    x0[idx::Z] = 2.0;
    let expect = phi.view((0, 0), (12, 12)) * x0 + phi.view((0, 12), (12, 12)) * drive;
    assert!(!r.crash.crashed);
    assert!(
        expect.iter().skip(3).any(|v| v.abs() > 0.01),
        "input too small to test anything"
    );
    let err = (r.final_state.x - &expect).amax();
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn difference_estimator_is_seeded() {
    let cfg = presets::rectangle_payload();
    let mut sc = hover(3.5, 2.0);
    sc.events = vec![ScenarioEvent::new(0.5, EventKind::ChangeMass { mass: 3.8 })];
    let run = |seed: u64| {
        let settings = SimSettings {
            accel: AccelSource::Difference { noise_std: 0.05 },
            seed,
            ..SimSettings::default()
        };
        // The output feeds the accelerations back only through G.
        let mut ctrl = idle_controller(&cfg, 3.5);
        ctrl.consts.g = nalgebra::Matrix4::identity() * 0.1;
        let r = run_scenario(&cfg, &mut ctrl, &sc, &settings).unwrap();
        r.trajectory.to_csv(&r.crash)
    };
    assert_eq!(run(7), run(7));
    assert_ne!(run(7), run(8));
}

#[test]
fn pid_tuning_lands_in_window() {
    let cfg = presets::rectangle_payload();
    let reference = [2.8, 2.9, 2.2, 2.3];
    let report = tune_pid(&cfg, reference, None, &PidTuning::default(), &SimSettings::default()).unwrap();
    assert!(report.converged, "{report:?}");
    for a in &report.axes {
        let rise = a.rise.unwrap();
        assert!((rise / a.reference - 1.0).abs() <= 0.10);
        // Re-measure with the final gains: tuning one axis must not have
        // disturbed another.
        let mut pid = PidController::new(&cfg.robots, report.params.clone(), cfg.gravity).unwrap();
        let again = step_rise(&cfg, &mut pid, a.axis, &StepProtocol::pid(), &SimSettings::default()).unwrap();
        assert!((again - rise).abs() < 1e-9);
    }
}

#[test]
fn preferred_times_move_the_aim_inside_the_window() {
    let cfg = presets::lshape_payload();
    let reference = [2.5, 2.6, 2.3, 2.1];
    let preferred = [2.55, 3.5, 2.06, 2.11];
    let report = tune_pid(
        &cfg,
        reference,
        Some(preferred),
        &PidTuning::default(),
        &SimSettings::default(),
    )
    .unwrap();
    assert_eq!(report.axes[0].aim, 2.55);
    assert!((report.axes[1].aim - 2.6 * 1.08).abs() < 1e-12);
    assert!(report.converged);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_are_deterministic(mass in 2.5f64..4.5, dz in -0.3f64..0.3) {
        let cfg = presets::rectangle_payload();
        let mut sc = hover(mass, 0.3);
        sc.events = vec![ScenarioEvent::new(0.1, EventKind::SetTarget { pose: [0.0, 0.0, 2.0 + dz, 0.0] })];
        let once = || {
            let mut ctrl = idle_controller(&cfg, 3.5);
            let r = run_scenario(&cfg, &mut ctrl, &sc, &SimSettings::default()).unwrap();
            r.trajectory.to_csv(&r.crash)
        };
        prop_assert_eq!(once(), once());
    }

    #[test]
    fn motor_thrust_stays_within_limits(level in 0.0f64..40.0) {
        let cfg = presets::lshape_payload();
        let plant = Plant::new(&cfg, PlantOptions::default(), 3.5, &Vector3::zeros());
        let mut s = WorldState::hover(&cfg, Vector3::new(0.0, 0.0, 2.0), 0.0, 3.5, Vector3::zeros());
        let cmd = DVector::from_element(cfg.robots.len(), level);
        for _ in 0..300 {
            plant.rk4(&mut s, &cmd, 1e-4);
            for (j, r) in cfg.robots.iter().enumerate() {
                prop_assert!(s.motor_thrusts[j] >= r.min_thrust && s.motor_thrusts[j] <= r.max_thrust);
            }
        }
    }
}
