use cotrans_control::snapshot::{restore, snapshot};
use cotrans_control::*;
use cotrans_core::model::{acceleration_rows, build_output_model, build_state_space, OutputModel, StateVector};
use cotrans_core::presets;
use nalgebra::{DVector, Matrix4, SMatrix, Vector3, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn outputs() -> OutputModel {
    build_output_model(&presets::rectangle_payload(), &presets::rectangle_outputs()).unwrap()
}

fn random_consts(rng: &mut ChaCha8Rng) -> ControlConstants {
    let om = outputs();
    ControlConstants {
        f: SMatrix::<f64, 4, 12>::from_fn(|_, _| rng.gen_range(-2.0..2.0)),
        g: Matrix4::from_fn(|r, c| if r == c { 1.0 } else { 0.0 } + rng.gen_range(-0.2..0.2)),
        c: om.c,
        d_hat: om.d_hat,
    }
}

fn random_broadcast(rng: &mut ChaCha8Rng) -> BroadcastSignal {
    BroadcastSignal {
        xi: StateVector::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
        accel_z: rng.gen_range(-3.0..3.0),
        accel_ang: Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0)),
    }
}

fn assc_params() -> AsscParams {
    AsscParams {
        k_hi: 49.0,
        k_lo: 7.0,
        u_max: 12.0,
        u_min: 0.0,
        slope: 1.0,
    }
}

#[test]
fn hover_equilibrium_gives_zero_output() {
    let om = outputs();
    let b = BroadcastSignal {
        xi: StateVector::zeros(),
        accel_z: 0.0,
        accel_ang: Vector3::zeros(),
    };
    let g = Matrix4::from_fn(|r, c| (r * 4 + c) as f64 + 1.0);
    assert_eq!(approx_output(&om, &g, &b), Vector4::zeros());
}

#[test]
fn acceleration_error_enters_through_d_hat() {
    let om = outputs();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let consts = random_consts(&mut rng);
    let b = random_broadcast(&mut rng);
    let delta = Vector4::new(0.3, -0.1, 0.05, 0.2);
    let mut shifted = b;
    shifted.accel_z += delta[0];
    shifted.accel_ang += Vector3::new(delta[1], delta[2], delta[3]);
    let diff = approx_output(&om, &consts.g, &shifted) - approx_output(&om, &consts.g, &b);
    assert!((diff - consts.g * om.d_hat * delta).amax() < 1e-12);
}

#[test]
fn output_approximation_matches_feedthrough_form_on_linear_plant() {
    // With accelerations read off ξ̇ = Aξ + BΔU the approximation equals
    // G(Cξ + DΔU) where D = D̂·[B rows of z̈, φ̈, θ̈, ψ̈].
    let cfg = presets::lshape_payload();
    let model = build_state_space(&cfg).unwrap();
    let om = build_output_model(&cfg, &presets::lshape_outputs()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let g = random_consts(&mut rng).g;
        let xi = StateVector::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let du = Vector4::from_fn(|_, _| rng.gen_range(-4.0..4.0));
        let acc = acceleration_rows(&(model.a * xi + model.b_quad * du));
        let b = BroadcastSignal {
            xi,
            accel_z: acc[0],
            accel_ang: Vector3::new(acc[1], acc[2], acc[3]),
        };
        let exact = g * (om.c * xi + om.d * du);
        let approx = approx_output(&om, &g, &b);
        assert!((approx - exact).amax() <= 1e-10 * exact.amax().max(1.0));
    }
}

#[test]
fn zero_state_feedback_at_origin() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let consts = random_consts(&mut rng);
    for q in 1..=4 {
        assert_eq!(rfc_input(&consts.f, &StateVector::zeros(), q), 0.0);
    }
}

#[test]
fn robots_in_one_quadrant_get_the_same_command() {
    let robots = presets::rectangle_payload().robots;
    let (a, b) = (&robots[0], &robots[1]);
    assert_eq!(a.quadrant, b.quadrant);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let consts = random_consts(&mut rng);
    let bc = random_broadcast(&mut rng);
    let state = AsscState::new(4.0);
    let p = assc_params();
    let ra = robot_command(a, &consts, &p, &state, &bc, 0.005, false);
    let rb = robot_command(b, &consts, &p, &state, &bc, 0.005, false);
    assert_eq!(ra.thrust, rb.thrust);
    assert_eq!(ra.state, rb.state);
}

#[test]
fn equilibrium_command_is_hover_thrust() {
    let robot = &presets::rectangle_payload().robots[2];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let consts = random_consts(&mut rng);
    let bc = BroadcastSignal {
        xi: StateVector::zeros(),
        accel_z: 0.0,
        accel_ang: Vector3::zeros(),
    };
    let step = robot_command(robot, &consts, &assc_params(), &AsscState::new(4.3), &bc, 0.005, false);
    assert_eq!(step.thrust, 4.3);
    assert_eq!(step.eta, 0.0);
}

#[test]
fn failed_robot_commands_zero_and_keeps_state() {
    let robot = &presets::lshape_payload().robots[7];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let consts = random_consts(&mut rng);
    let bc = random_broadcast(&mut rng);
    let mut state = AsscState::new(5.0);
    state.phi = 0.7;
    let step = robot_command(robot, &consts, &assc_params(), &state, &bc, 0.005, true);
    assert_eq!(step.thrust, 0.0);
    assert_eq!(step.state, state);
}

#[test]
fn acquisition_takes_filtered_thrust_and_resets_phi() {
    let mut s = AsscState::new(4.0);
    s.phi = 0.4;
    for k in 0..400 {
        s = acquire_u0(&s, 4.9, 0.005, 5.0, k == 399);
    }
    assert!((s.u0 - 4.9).abs() < 0.049);
    assert!(s.u0_acquired);
    assert_eq!(s.phi, 0.0);
}

#[test]
fn proposed_controller_starts_at_equal_share_of_initial_mass() {
    let cfg = presets::rectangle_payload();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ctrl = ProposedController::new(&cfg.robots, random_consts(&mut rng), &ProposedParams::default(), 9.81).unwrap();
    for rc in &ctrl.robots {
        assert_eq!(rc.state.u0, 3.5 * 9.81 / 8.0);
        assert!(!rc.state.u0_acquired);
        assert_eq!(rc.params.u_max, rc.spec.max_thrust);
    }
}

#[test]
fn rejects_bad_gains() {
    let cfg = presets::rectangle_payload();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = ProposedParams {
        k_lo: 60.0,
        ..ProposedParams::default()
    };
    assert!(ProposedController::new(&cfg.robots, random_consts(&mut rng), &params, 9.81).is_err());
}

#[test]
fn snapshot_round_trip_restores_behavior() {
    let cfg = presets::lshape_payload();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let consts = random_consts(&mut rng);
    let mut a = ProposedController::new(&cfg.robots, consts.clone(), &ProposedParams::default(), 9.81).unwrap();
    let failed = vec![false; cfg.robots.len()];
    for k in 0..50 {
        let bc = random_broadcast(&mut rng);
        a.tick(&bc, &failed, k == 30, 0.005);
    }
    let text = snapshot(&a).to_text();
    let mut b = ProposedController::new(&cfg.robots, consts, &ProposedParams::default(), 9.81).unwrap();
    restore(&mut b, &cotrans_core::archive::MatrixArchive::parse(&text).unwrap()).unwrap();
    for _ in 0..20 {
        let bc = random_broadcast(&mut rng);
        assert_eq!(a.tick(&bc, &failed, false, 0.005), b.tick(&bc, &failed, false, 0.005));
    }
}

#[test]
fn snapshot_with_wrong_robot_count_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let consts = random_consts(&mut rng);
    let rect = ProposedController::new(
        &presets::rectangle_payload().robots,
        consts.clone(),
        &ProposedParams::default(),
        9.81,
    )
    .unwrap();
    let mut l = ProposedController::new(
        &presets::lshape_payload().robots,
        consts,
        &ProposedParams::default(),
        9.81,
    )
    .unwrap();
    assert!(matches!(
        restore(&mut l, &snapshot(&rect)),
        Err(ControlError::Archive(_))
    ));
}

#[test]
fn pid_holds_hover_with_equal_shares_on_symmetric_layout() {
    let cfg = presets::rectangle_payload();
    let gains = PidGains::from_bandwidth(1.0, 1.0, 0.5);
    let params = PidParams {
        position: [gains; 3],
        attitude: [PidGains::from_bandwidth(8.0, 1.0, 0.5); 3],
        mass: 3.5,
        inertia: [0.419, 0.010, 0.429],
        max_tilt: 0.5,
        integral_limit: 10.0,
    };
    let mut pid = PidController::new(&cfg.robots, params, 9.81).unwrap();
    let u = pid.step(&StateVector::zeros(), 0.005);
    let share = 3.5 * 9.81 / 8.0;
    assert!((u - DVector::from_element(8, share)).amax() < 1e-12);

    // A pure altitude error raises every robot by the same amount.
    let mut xi = StateVector::zeros();
    xi[2] = -0.5;
    let mut pid = PidController::new(&cfg.robots, pid.params.clone(), 9.81).unwrap();
    let u = pid.step(&xi, 0.005);
    let inc = u.add_scalar(-share);
    assert!(inc.min() > 0.0);
    assert!(inc.max() - inc.min() < 1e-12);
}

proptest! {
    #[test]
    fn rho_is_monotone_continuous_and_bounded(
        u0 in 0.5f64..6.0,
        slope in 0.05f64..20.0,
        a in -50.0f64..50.0,
        b in -50.0f64..50.0,
    ) {
        let p = AsscParams { slope, ..assc_params() };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (rl, rh) = (p.rho(lo, u0), p.rho(hi, u0));
        prop_assert!(rl <= rh);
        prop_assert!(rl >= p.u_min - u0 && rh <= p.u_max - u0);
        // Lipschitz with the slope, hence continuous.
        prop_assert!(rh - rl <= slope * (hi - lo) + 1e-12);
    }

    #[test]
    fn gain_is_high_only_when_acquired_and_phi_eta_positive(
        phi in -5.0f64..5.0,
        eta in -5.0f64..5.0,
        acquired: bool,
    ) {
        let p = assc_params();
        let mut s = AsscState::new(4.0);
        s.phi = phi;
        s.u0_acquired = acquired;
        let (out, next) = assc_step(&p, &s, eta, 0.005);
        prop_assert!(out.gain == p.k_hi || out.gain == p.k_lo);
        prop_assert_eq!(out.gain == p.k_hi, acquired && phi * eta > 0.0);
        prop_assert_eq!(next.phi, phi - out.gain * eta * 0.005);
    }

    #[test]
    fn command_ignores_foreign_robot_state(seed: u64, j in 0usize..8) {
        let cfg = presets::rectangle_payload();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let consts = random_consts(&mut rng);
        let mut ctrl = ProposedController::new(&cfg.robots, consts, &ProposedParams::default(), 9.81).unwrap();
        for rc in ctrl.robots.iter_mut() {
            rc.state.phi = rng.gen_range(-2.0..2.0);
            rc.state.u0_acquired = rng.gen();
        }
        let bc = random_broadcast(&mut rng);
        let rc = &ctrl.robots[j];
        let before = robot_command(&rc.spec, &ctrl.consts, &rc.params, &rc.state, &bc, 0.005, false);
        let mut others = ctrl.clone();
        for (k, o) in others.robots.iter_mut().enumerate() {
            if k != j {
                o.state.phi = rng.gen_range(-20.0..20.0);
                o.state.u0 = rng.gen_range(0.0..10.0);
            }
        }
        let full_before = ctrl.tick(&bc, &[false; 8], false, 0.005)[j];
        let full_after = others.tick(&bc, &[false; 8], false, 0.005)[j];
        prop_assert_eq!(full_before, full_after);
        prop_assert_eq!(full_before.thrust, before.thrust);
    }
}
