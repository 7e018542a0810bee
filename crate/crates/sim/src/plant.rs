//! Hover dynamics with the current true mass and COM, Coriolis coupling and
//! first-order motors.

use cotrans_core::model::{hover_dynamics, idx, rotational_column, PayloadConfig, StateMatrix, StateVector};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Physics switches. Turning all three off leaves the linear hover model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantOptions {
    pub coriolis: bool,
    /// Motor time constant, s. `None` applies commands instantly.
    pub motor_time_constant: Option<f64>,
    /// Clip motor thrust to each robot's `[U_n, U_p]`.
    pub motor_saturation: bool,
}

impl Default for PlantOptions {
    fn default() -> Self {
        Self {
            coriolis: true,
            motor_time_constant: Some(0.01),
            motor_saturation: true,
        }
    }
}

impl PlantOptions {
    pub fn linear() -> Self {
        Self {
            coriolis: false,
            motor_time_constant: None,
            motor_saturation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    /// Absolute state `[x, y, z, ẋ, ẏ, ż, φ, θ, ψ, p, q, r]`.
    pub x: StateVector,
    /// Actual (lagged) thrust of every robot, N.
    pub motor_thrusts: DVector<f64>,
    pub true_mass: f64,
    pub true_com: Vector3<f64>,
    pub failed: Vec<bool>,
    pub t: f64,
}

impl WorldState {
    pub fn hover(config: &PayloadConfig, position: Vector3<f64>, yaw: f64, mass: f64, com: Vector3<f64>) -> Self {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(idx::X).copy_from(&position);
        x[idx::YAW] = yaw;
        Self {
            x,
            motor_thrusts: DVector::zeros(config.robots.len()),
            true_mass: mass,
            true_com: com,
            failed: vec![false; config.robots.len()],
            t: 0.0,
        }
    }
}

/// Plant parameters that only change at events.
#[derive(Debug, Clone)]
pub struct Plant {
    pub options: PlantOptions,
    a: StateMatrix,
    gravity: f64,
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    attach: Vec<Vector3<f64>>,
    spin_cq: Vec<(f64, f64)>,
    pub max_thrust: DVector<f64>,
    pub min_thrust: DVector<f64>,
    /// Per-robot input columns for the current mass and COM.
    b: DMatrix<f64>,
}

impl Plant {
    pub fn new(config: &PayloadConfig, options: PlantOptions, mass: f64, com: &Vector3<f64>) -> Self {
        let inertia = config.inertia_matrix();
        let mut plant = Self {
            options,
            a: hover_dynamics(config.gravity),
            gravity: config.gravity,
            inertia,
            inertia_inv: inertia.try_inverse().expect("validated inertia"),
            attach: config.robots.iter().map(|r| r.attach()).collect(),
            spin_cq: config
                .robots
                .iter()
                .map(|r| (r.spin(), r.thrust_torque_coeff))
                .collect(),
            max_thrust: DVector::from_iterator(config.robots.len(), config.robots.iter().map(|r| r.max_thrust)),
            min_thrust: DVector::from_iterator(config.robots.len(), config.robots.iter().map(|r| r.min_thrust)),
            b: DMatrix::zeros(12, config.robots.len()),
        };
        plant.rebuild(mass, com);
        plant
    }

    /// Recomputes the input columns: `1/m` on ż and `J⁻¹[r_y; −r_x; d c_q]`
    /// with lever arms measured from the true COM.
    pub fn rebuild(&mut self, mass: f64, com: &Vector3<f64>) {
        for (j, p) in self.attach.iter().enumerate() {
            let (spin, cq) = self.spin_cq[j];
            self.b[(idx::VZ, j)] = 1.0 / mass;
            let rot = rotational_column(&self.inertia, &(p - com), spin, cq);
            for k in 0..3 {
                self.b[(idx::P + k, j)] = rot[k];
            }
        }
    }

    pub fn input_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    /// State and motor derivatives for actual thrusts `u` and commands
    /// `cmd`. Without a motor lag the motor derivative is zero.
    pub fn derivative(&self, x: &StateVector, u: &DVector<f64>, cmd: &DVector<f64>) -> (StateVector, DVector<f64>) {
        let mut dx = self.a * x;
        dx += &self.b * u;
        dx[idx::VZ] -= self.gravity;
        if self.options.coriolis {
            let w = Vector3::new(x[idx::P], x[idx::Q], x[idx::R]);
            let c = self.inertia_inv * w.cross(&(self.inertia * w));
            for k in 0..3 {
                dx[idx::P + k] -= c[k];
            }
        }
        let du = match self.options.motor_time_constant {
            Some(tm) => (cmd - u) / tm,
            None => DVector::zeros(u.len()),
        };
        (dx, du)
    }

    pub fn clip(&self, u: &mut DVector<f64>) {
        if self.options.motor_saturation {
            for j in 0..u.len() {
                u[j] = u[j].clamp(self.min_thrust[j], self.max_thrust[j]);
            }
        }
    }

    /// One classical RK4 step of length `dt` with the command held.
    pub fn rk4(&self, state: &mut WorldState, cmd: &DVector<f64>, dt: f64) {
        let (x0, u0) = (state.x, state.motor_thrusts.clone());
        let (k1x, k1u) = self.derivative(&x0, &u0, cmd);
        let (k2x, k2u) = self.derivative(&(x0 + k1x * (dt / 2.0)), &(&u0 + &k1u * (dt / 2.0)), cmd);
        let (k3x, k3u) = self.derivative(&(x0 + k2x * (dt / 2.0)), &(&u0 + &k2u * (dt / 2.0)), cmd);
        let (k4x, k4u) = self.derivative(&(x0 + k3x * dt), &(&u0 + &k3u * dt), cmd);
        state.x = x0 + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
        state.motor_thrusts = u0 + (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (dt / 6.0);
        self.clip(&mut state.motor_thrusts);
        state.t += dt;
    }
}
