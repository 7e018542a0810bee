//! Linearized hover model, four-input quadrant aggregation and the output
//! transformation.
//!
//! State ordering is `[x, y, z, ẋ, ẏ, ż, φ, θ, ψ, φ̇, θ̇, ψ̇]`, all expressed
//! as errors from the reference pose when used as [`ErrorState`].

use nalgebra::{DMatrix, Matrix3, Matrix4, SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub type StateMatrix = SMatrix<f64, 12, 12>;
pub type QuadInput = SMatrix<f64, 12, 4>;
pub type OutputMatrix = SMatrix<f64, 4, 12>;
pub type StateVector = SVector<f64, 12>;

/// Indices into the 12-dimensional state.
pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const VX: usize = 3;
    pub const VY: usize = 4;
    pub const VZ: usize = 5;
    pub const ROLL: usize = 6;
    pub const PITCH: usize = 7;
    pub const YAW: usize = 8;
    pub const P: usize = 9;
    pub const Q: usize = 10;
    pub const R: usize = 11;
}

pub const DEFAULT_GRAVITY: f64 = 9.81;

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

/// One single-rotor robot attached to the payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub id: String,
    /// 1..=4, counter-clockwise from the (+x, +y) quadrant.
    pub quadrant: usize,
    /// Attachment point in the payload frame, relative to the nominal COM.
    pub attach_position: [f64; 3],
    /// +1 or -1.
    pub spin_direction: i8,
    /// Yaw torque per unit thrust, meters.
    pub thrust_torque_coeff: f64,
    pub max_thrust: f64,
    #[serde(default)]
    pub min_thrust: f64,
}

impl RobotSpec {
    pub fn attach(&self) -> Vector3<f64> {
        Vector3::from(self.attach_position)
    }

    pub fn spin(&self) -> f64 {
        f64::from(self.spin_direction)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !(1..=4).contains(&self.quadrant) {
            return Err(ModelError::QuadrantIndex {
                id: self.id.clone(),
                quadrant: self.quadrant,
            });
        }
        if self.spin_direction != 1 && self.spin_direction != -1 {
            return Err(ModelError::SpinDirection { id: self.id.clone() });
        }
        if !(self.min_thrust >= 0.0 && self.max_thrust > self.min_thrust) {
            return Err(ModelError::ThrustLimits { id: self.id.clone() });
        }
        if !(self.thrust_torque_coeff.is_finite() && self.thrust_torque_coeff > 0.0) {
            return Err(ModelError::TorqueCoefficient { id: self.id.clone() });
        }
        let [x, y, _] = self.attach_position;
        if x == 0.0 || y == 0.0 {
            return Err(ModelError::OnAxis { id: self.id.clone() });
        }
        if quadrant_of(x, y) != self.quadrant {
            return Err(ModelError::QuadrantMismatch {
                id: self.id.clone(),
                declared: self.quadrant,
                actual: quadrant_of(x, y),
            });
        }
        Ok(())
    }
}

/// Quadrant index of a point off both axes.
pub fn quadrant_of(x: f64, y: f64) -> usize {
    match (x > 0.0, y > 0.0) {
        (true, true) => 1,
        (false, true) => 2,
        (false, false) => 3,
        (true, false) => 4,
    }
}

/// Payload together with its attached robots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadConfig {
    pub mass: f64,
    /// Diagonal of the inertia matrix, kg·m².
    pub inertia: [f64; 3],
    pub robots: Vec<RobotSpec>,
    /// Defaults to the mean attachment point of each quadrant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrant_rep_points: Option<[[f64; 3]; 4]>,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

const CQ_TOL: f64 = 1e-6;

impl PayloadConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(ModelError::Mass(self.mass));
        }
        if !self.inertia.iter().all(|j| j.is_finite() && *j > 0.0) {
            return Err(ModelError::SingularInertia);
        }
        if !(self.gravity.is_finite() && self.gravity > 0.0) {
            return Err(ModelError::Gravity(self.gravity));
        }
        let mut ids = std::collections::BTreeSet::new();
        for r in &self.robots {
            r.validate()?;
            if !ids.insert(r.id.as_str()) {
                return Err(ModelError::DuplicateId { id: r.id.clone() });
            }
        }
        let counts = self.robot_counts();
        if let Some(q) = counts.iter().position(|&n| n == 0) {
            return Err(ModelError::EmptyQuadrant { quadrant: q + 1 });
        }
        let mut spins = [0i8; 4];
        let mut cq_mean = [0.0; 4];
        for r in &self.robots {
            let q = r.quadrant - 1;
            if spins[q] == 0 {
                spins[q] = r.spin_direction;
            } else if spins[q] != r.spin_direction {
                return Err(ModelError::MixedSpin { quadrant: r.quadrant });
            }
            cq_mean[q] += r.thrust_torque_coeff / counts[q] as f64;
        }
        if spins.iter().all(|&s| s == spins[0]) {
            return Err(ModelError::UniformSpin);
        }
        if cq_mean.iter().any(|c| (c - cq_mean[0]).abs() > CQ_TOL) {
            return Err(ModelError::TorqueCoefficientSpread { means: cq_mean });
        }
        if let Some(points) = &self.quadrant_rep_points {
            for (q, p) in points.iter().enumerate() {
                if p[0] == 0.0 || p[1] == 0.0 || quadrant_of(p[0], p[1]) != q + 1 {
                    return Err(ModelError::RepresentativePoint { quadrant: q + 1 });
                }
            }
        }
        Ok(())
    }

    pub fn robot_counts(&self) -> [usize; 4] {
        let mut n = [0; 4];
        for r in &self.robots {
            if (1..=4).contains(&r.quadrant) {
                n[r.quadrant - 1] += 1;
            }
        }
        n
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.inertia))
    }

    pub fn rep_points(&self) -> [Vector3<f64>; 4] {
        if let Some(p) = &self.quadrant_rep_points {
            return p.map(Vector3::from);
        }
        let counts = self.robot_counts();
        let mut sums = [Vector3::zeros(); 4];
        for r in &self.robots {
            sums[r.quadrant - 1] += r.attach();
        }
        let mut out = [Vector3::zeros(); 4];
        for q in 0..4 {
            out[q] = sums[q] / counts[q].max(1) as f64;
        }
        out
    }

    /// Spin direction shared by each quadrant (0 for an empty quadrant).
    pub fn quadrant_spins(&self) -> [f64; 4] {
        let mut d = [0.0; 4];
        for r in &self.robots {
            d[r.quadrant - 1] = r.spin();
        }
        d
    }

    /// Mean thrust-torque coefficient over all robots.
    pub fn shared_cq(&self) -> f64 {
        let n = self.robots.len().max(1) as f64;
        self.robots.iter().map(|r| r.thrust_torque_coeff).sum::<f64>() / n
    }
}

/// Rotational input rows `J⁻¹[(r×e₃)₁₂; d·c_q]` for a single thrust.
pub fn rotational_column(inertia: &Matrix3<f64>, lever: &Vector3<f64>, spin: f64, cq: f64) -> Vector3<f64> {
    let torque = Vector3::new(lever.y, -lever.x, spin * cq);
    Vector3::new(
        torque.x / inertia[(0, 0)],
        torque.y / inertia[(1, 1)],
        torque.z / inertia[(2, 2)],
    )
}

/// Quadrant input matrix for a given mass, inertia and per-quadrant lever
/// arms.
pub fn quad_input_matrix(
    mass: f64,
    inertia: &Matrix3<f64>,
    levers: &[Vector3<f64>; 4],
    spins: &[f64; 4],
    cq: f64,
) -> QuadInput {
    let mut b = QuadInput::zeros();
    for i in 0..4 {
        b[(idx::VZ, i)] = 1.0 / mass;
        let rot = rotational_column(inertia, &levers[i], spins[i], cq);
        for k in 0..3 {
            b[(idx::P + k, i)] = rot[k];
        }
    }
    b
}

/// Data behind the four-input aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadGeometry {
    pub inertia: Matrix3<f64>,
    pub rep_points: [Vector3<f64>; 4],
    pub spins: [f64; 4],
    pub cq: f64,
}

impl QuadGeometry {
    pub fn from_config(config: &PayloadConfig) -> Self {
        Self {
            inertia: config.inertia_matrix(),
            rep_points: config.rep_points(),
            spins: config.quadrant_spins(),
            cq: config.shared_cq(),
        }
    }

    /// Quadrant input matrix with the COM displaced to `com`.
    pub fn input_matrix(&self, mass: f64, com: &Vector3<f64>) -> QuadInput {
        let levers = self.rep_points.map(|p| p - com);
        quad_input_matrix(mass, &self.inertia, &levers, &self.spins, self.cq)
    }
}

/// Linearized hover model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: StateMatrix,
    pub b_full: DMatrix<f64>,
    pub b_quad: QuadInput,
    /// Gravity offset: `ξ̇ = Aξ + B_n u + w`.
    pub w: StateVector,
    pub robot_counts: [usize; 4],
    pub mass: f64,
    pub gravity: f64,
    pub geometry: QuadGeometry,
}

/// The hover dynamics matrix: velocity couplings and the small-angle
/// gravity block.
pub fn hover_dynamics(g: f64) -> StateMatrix {
    let mut a = StateMatrix::zeros();
    for k in 0..3 {
        a[(k, k + 3)] = 1.0;
        a[(k + 6, k + 9)] = 1.0;
    }
    a[(idx::VX, idx::PITCH)] = g;
    a[(idx::VY, idx::ROLL)] = -g;
    a
}

pub fn build_state_space(config: &PayloadConfig) -> Result<LinearModel, ModelError> {
    config.validate()?;
    let g = config.gravity;
    let j = config.inertia_matrix();
    let n = config.robots.len();
    let mut b_full = DMatrix::zeros(12, n);
    for (col, r) in config.robots.iter().enumerate() {
        b_full[(idx::VZ, col)] = 1.0 / config.mass;
        let rot = rotational_column(&j, &r.attach(), r.spin(), r.thrust_torque_coeff);
        for k in 0..3 {
            b_full[(idx::P + k, col)] = rot[k];
        }
    }
    let mut w = StateVector::zeros();
    w[idx::VZ] = -g;
    Ok(LinearModel {
        a: hover_dynamics(g),
        b_full,
        b_quad: aggregate_quadrant_input(config)?,
        w,
        robot_counts: config.robot_counts(),
        mass: config.mass,
        gravity: g,
        geometry: QuadGeometry::from_config(config),
    })
}

pub fn aggregate_quadrant_input(config: &PayloadConfig) -> Result<QuadInput, ModelError> {
    config.validate()?;
    Ok(QuadGeometry::from_config(config).input_matrix(config.mass, &Vector3::zeros()))
}

/// Weights of the output transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputCoefficients {
    pub cx: [f64; 5],
    pub cy: [f64; 5],
    pub cz: [f64; 3],
    pub cpsi: [f64; 3],
}

impl OutputCoefficients {
    pub fn validate(&self) -> Result<(), ModelError> {
        let all = self.cx.iter().chain(&self.cy).chain(&self.cz).chain(&self.cpsi);
        if all.into_iter().all(|c| c.is_finite() && *c > 0.0) {
            Ok(())
        } else {
            Err(ModelError::OutputCoefficients)
        }
    }

    pub fn c_matrix(&self, g: f64) -> OutputMatrix {
        let (cx, cy, cz, cp) = (&self.cx, &self.cy, &self.cz, &self.cpsi);
        let mut c = OutputMatrix::zeros();
        c[(0, idx::X)] = cx[0];
        c[(1, idx::Y)] = cy[0];
        c[(2, idx::Z)] = cz[0];
        c[(0, idx::VX)] = cx[1];
        c[(1, idx::VY)] = cy[1];
        c[(2, idx::VZ)] = cz[1];
        c[(0, idx::PITCH)] = g * cx[2];
        c[(1, idx::ROLL)] = -g * cy[2];
        c[(3, idx::YAW)] = cp[0];
        c[(0, idx::Q)] = g * cx[3];
        c[(1, idx::P)] = -g * cy[3];
        c[(3, idx::R)] = cp[1];
        c
    }

    pub fn d_hat(&self, g: f64) -> Matrix4<f64> {
        #[rustfmt::skip]
        let d = Matrix4::new(
            0.0, 0.0, g * self.cx[4], 0.0,
            0.0, -g * self.cy[4], 0.0, 0.0,
            self.cz[2], 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, self.cpsi[2],
        );
        d
    }
}

/// Output matrices of the transformed system `ζ = Cξ + D(U − U_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputModel {
    pub c: OutputMatrix,
    pub d: Matrix4<f64>,
    pub d_hat: Matrix4<f64>,
}

/// Rows of `B` mapping inputs to `[z̈, φ̈, θ̈, ψ̈]`.
pub fn acceleration_stack(b: &QuadInput) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for (row, src) in [idx::VZ, idx::P, idx::Q, idx::R].into_iter().enumerate() {
        m.set_row(row, &b.row(src));
    }
    m
}

/// Picks `[z̈, φ̈, θ̈, ψ̈]` out of a state derivative.
pub fn acceleration_rows(xdot: &StateVector) -> Vector4<f64> {
    Vector4::new(xdot[idx::VZ], xdot[idx::P], xdot[idx::Q], xdot[idx::R])
}

/// Feedthrough for an arbitrary input matrix (no singularity check).
pub fn feedthrough(d_hat: &Matrix4<f64>, b: &QuadInput) -> Matrix4<f64> {
    d_hat * acceleration_stack(b)
}

const SINGULAR_TOL: f64 = 1e-12;

pub fn build_output_model(config: &PayloadConfig, coeffs: &OutputCoefficients) -> Result<OutputModel, ModelError> {
    coeffs.validate()?;
    let b = aggregate_quadrant_input(config)?;
    let stack = acceleration_stack(&b);
    let svd = stack.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > SINGULAR_TOL * smax.max(1.0)) {
        return Err(ModelError::SingularAccelerationStack);
    }
    let g = config.gravity;
    let d_hat = coeffs.d_hat(g);
    Ok(OutputModel {
        c: coeffs.c_matrix(g),
        d: d_hat * stack,
        d_hat,
    })
}

/// Tracking error of the 12-dimensional state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorState {
    pub xi: StateVector,
}

impl ErrorState {
    pub fn new(xi: StateVector) -> Self {
        Self { xi }
    }

    pub fn is_finite(&self) -> bool {
        self.xi.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn gravity_block_signs() {
        let m = build_state_space(&presets::rectangle_payload()).unwrap();
        assert_eq!(m.a[(idx::VX, idx::PITCH)], 9.81);
        assert_eq!(m.a[(idx::VY, idx::ROLL)], -9.81);
        let gm = m.a.fixed_view::<2, 2>(idx::VX, idx::ROLL);
        assert_eq!(gm, -gm.transpose());
        assert_eq!(m.w[idx::VZ], -9.81);
    }

    #[test]
    fn translational_rows_are_inverse_mass() {
        let m = build_state_space(&presets::rectangle_payload()).unwrap();
        for c in 0..m.b_full.ncols() {
            assert_eq!(m.b_full[(idx::VX, c)], 0.0);
            assert_eq!(m.b_full[(idx::VY, c)], 0.0);
            assert!((m.b_full[(idx::VZ, c)] - 1.0 / 3.5).abs() < 1e-15);
        }
    }

    #[test]
    fn vertical_lever_has_no_roll_pitch_effect() {
        let j = Matrix3::from_diagonal(&Vector3::new(0.4, 0.1, 0.4));
        let col = rotational_column(&j, &Vector3::new(0.0, 0.0, 0.37), 1.0, 0.162);
        assert_eq!(col.x, 0.0);
        assert_eq!(col.y, 0.0);
    }

    #[test]
    fn yaw_row_follows_spin_pattern() {
        let cfg = presets::rectangle_payload();
        let b = aggregate_quadrant_input(&cfg).unwrap();
        for (i, d) in [-1.0, 1.0, -1.0, 1.0].into_iter().enumerate() {
            assert!((b[(idx::R, i)] - d * 0.162 / 0.429).abs() < 1e-15);
        }
        let roll: f64 = (0..4).map(|i| b[(idx::P, i)]).sum();
        let pitch: f64 = (0..4).map(|i| b[(idx::Q, i)]).sum();
        assert!(roll.abs() < 1e-14 && pitch.abs() < 1e-14);
    }

    #[test]
    fn feedthrough_identity() {
        let cfg = presets::rectangle_payload();
        let om = build_output_model(&cfg, &presets::rectangle_outputs()).unwrap();
        assert_eq!(om.c[(0, idx::PITCH)], 9.81 * 1.82);
        let stack = acceleration_stack(&aggregate_quadrant_input(&cfg).unwrap());
        let back = om.d * stack.try_inverse().unwrap();
        assert!((back - om.d_hat).abs().max() < 1e-10);
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut cfg = presets::rectangle_payload();
        cfg.robots[0].attach_position[0] = -cfg.robots[0].attach_position[0];
        assert!(matches!(cfg.validate(), Err(ModelError::QuadrantMismatch { .. })));

        let mut cfg = presets::rectangle_payload();
        cfg.robots.retain(|r| r.quadrant != 3);
        assert!(matches!(
            build_state_space(&cfg),
            Err(ModelError::EmptyQuadrant { quadrant: 3 })
        ));

        let mut cfg = presets::rectangle_payload();
        for r in &mut cfg.robots {
            r.spin_direction = 1;
        }
        assert!(matches!(aggregate_quadrant_input(&cfg), Err(ModelError::UniformSpin)));

        let mut cfg = presets::rectangle_payload();
        cfg.inertia[1] = 0.0;
        assert!(matches!(cfg.validate(), Err(ModelError::SingularInertia)));
    }

    #[test]
    fn spin_aligned_with_roll_is_singular() {
        let mut cfg = presets::rectangle_payload();
        for r in &mut cfg.robots {
            r.spin_direction = if r.quadrant <= 2 { 1 } else { -1 };
        }
        assert!(matches!(
            build_output_model(&cfg, &presets::rectangle_outputs()),
            Err(ModelError::SingularAccelerationStack)
        ));
    }
}
