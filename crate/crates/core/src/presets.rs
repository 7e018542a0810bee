//! Built-in payload layouts.
//!
//! Both layouts put the nominal COM at the origin of the payload frame.
//! Robot positions and types are this crate's choice; counts, inertia,
//! output weights and pole regions are the reference values.

use nalgebra::Vector3;

use crate::design::{PoleRegion, UncertaintyBox};
use crate::model::{OutputCoefficients, PayloadConfig, RobotSpec, DEFAULT_GRAVITY};

pub const THRUST_A: f64 = 7.0;
pub const THRUST_B: f64 = 12.0;
pub const THRUST_C: f64 = 15.0;
pub const CQ: f64 = 0.162;
/// Mid-point of the design mass range, used for the initial hover thrust
/// and as the nominal model mass.
pub const NOMINAL_MASS: f64 = 3.5;

const SPINS: [i8; 4] = [-1, 1, -1, 1];

fn robot(id: &str, quadrant: usize, x: f64, y: f64, max_thrust: f64) -> RobotSpec {
    RobotSpec {
        id: id.to_string(),
        quadrant,
        attach_position: [x, y, 0.0],
        spin_direction: SPINS[quadrant - 1],
        thrust_torque_coeff: CQ,
        max_thrust,
        min_thrust: 0.0,
    }
}

/// Eight robots on a long narrow plate (long side along y).
pub fn rectangle_payload() -> PayloadConfig {
    PayloadConfig {
        mass: NOMINAL_MASS,
        inertia: [0.419, 0.010, 0.429],
        robots: vec![
            robot("r1", 1, 0.1, 0.3, THRUST_B),
            robot("r2", 1, 0.1, 0.7, THRUST_C),
            robot("r3", 2, -0.1, 0.3, THRUST_B),
            robot("r4", 2, -0.1, 0.7, THRUST_A),
            robot("r5", 3, -0.1, -0.3, THRUST_B),
            robot("r6", 3, -0.1, -0.7, THRUST_C),
            robot("r7", 4, 0.1, -0.3, THRUST_B),
            robot("r8", 4, 0.1, -0.7, THRUST_A),
        ],
        quadrant_rep_points: None,
        gravity: DEFAULT_GRAVITY,
    }
}

pub fn rectangle_outputs() -> OutputCoefficients {
    OutputCoefficients {
        cx: [1.00, 2.20, 1.82, 0.67, 0.09],
        cy: [1.00, 2.00, 1.5, 0.5, 0.06],
        cz: [1.00, 1.00, 0.25],
        cpsi: [1.00, 1.00, 0.25],
    }
}

pub fn rectangle_region() -> PoleRegion {
    PoleRegion {
        tau1: 0.25,
        tau2: 140.0,
        tau3: 1.00,
    }
}

pub fn rectangle_com_vertices() -> Vec<Vector3<f64>> {
    box_corners(0.02, 0.1)
}

pub fn rectangle_box() -> UncertaintyBox {
    UncertaintyBox::new([2.0, 5.5], rectangle_com_vertices(), rectangle_payload().robot_counts())
}

/// Ten robots on an L-shaped frame: a bar along y on the −x side and a
/// foot along +x.
pub fn lshape_payload() -> PayloadConfig {
    PayloadConfig {
        mass: NOMINAL_MASS,
        inertia: [0.392, 0.142, 0.521],
        robots: vec![
            robot("l1", 1, 0.15, 0.15, THRUST_A),
            robot("l2", 1, 0.43, 0.15, THRUST_B),
            robot("l3", 1, 0.72, 0.15, THRUST_A),
            robot("l4", 1, 1.0, 0.15, THRUST_A),
            robot("l5", 2, -0.3, 0.03, THRUST_A),
            robot("l6", 2, -0.4, 0.75, THRUST_B),
            robot("l7", 3, -0.3, -0.1, THRUST_B),
            robot("l8", 3, -0.3, -0.35, THRUST_C),
            robot("l9", 3, -0.3, -0.6, THRUST_B),
            robot("l10", 4, 0.45, -0.15, THRUST_C),
        ],
        quadrant_rep_points: None,
        gravity: DEFAULT_GRAVITY,
    }
}

pub fn lshape_outputs() -> OutputCoefficients {
    OutputCoefficients {
        cx: [1.00, 2.00, 1.5, 0.5, 0.06],
        cy: [1.00, 2.00, 1.5, 0.5, 0.06],
        cz: [1.00, 1.00, 0.25],
        cpsi: [1.00, 1.00, 0.25],
    }
}

pub fn lshape_region() -> PoleRegion {
    PoleRegion {
        tau1: 0.40,
        tau2: 60.0,
        tau3: 0.60,
    }
}

pub fn lshape_com_vertices() -> Vec<Vector3<f64>> {
    box_corners(0.05, 0.1)
}

pub fn lshape_box() -> UncertaintyBox {
    UncertaintyBox::new([2.0, 5.5], lshape_com_vertices(), lshape_payload().robot_counts())
}

fn box_corners(hx: f64, hy: f64) -> Vec<Vector3<f64>> {
    vec![
        Vector3::new(hx, hy, 0.0),
        Vector3::new(-hx, hy, 0.0),
        Vector3::new(-hx, -hy, 0.0),
        Vector3::new(hx, -hy, 0.0),
    ]
}
