//! Centralized cascade PID baseline with a minimum-norm thrust mixer.

use cotrans_core::model::{idx, RobotSpec, StateVector};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::ControlError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl PidGains {
    /// Gains whose error dynamics have the characteristic polynomial
    /// `(s + a·ω)(s² + 2ζωs + ω²)`.
    pub fn from_bandwidth(omega: f64, zeta: f64, integral_ratio: f64) -> Self {
        let a = integral_ratio;
        Self {
            kp: omega * omega * (1.0 + 2.0 * zeta * a),
            ki: a * omega.powi(3),
            kd: omega * (2.0 * zeta + a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidParams {
    /// Outer loops on x, y, z position (acceleration commands).
    pub position: [PidGains; 3],
    /// Inner loops on roll, pitch, yaw (angular acceleration commands).
    pub attitude: [PidGains; 3],
    /// Mass used for the collective thrust, kg.
    pub mass: f64,
    /// Inertia used for the torque commands, kg·m².
    pub inertia: [f64; 3],
    /// Limit on the roll and pitch references, rad.
    pub max_tilt: f64,
    /// Absolute bound on every integrator state.
    pub integral_limit: f64,
}

/// Thrust mixer: minimum-norm right inverse of the wrench map
/// `[1ᵀ; r_yᵀ; −r_xᵀ; (d c_q)ᵀ]`, built from the nominal geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixer {
    /// `n × 4`; columns map collective thrust and the three torques.
    pub map: DMatrix<f64>,
    pub max_thrust: DVector<f64>,
    pub min_thrust: DVector<f64>,
}

impl Mixer {
    pub fn new(robots: &[RobotSpec]) -> Result<Self, ControlError> {
        let n = robots.len();
        let mut w = DMatrix::zeros(4, n);
        for (j, r) in robots.iter().enumerate() {
            let p = r.attach();
            w[(0, j)] = 1.0;
            w[(1, j)] = p.y;
            w[(2, j)] = -p.x;
            w[(3, j)] = r.spin() * r.thrust_torque_coeff;
        }
        let gram = &w * w.transpose();
        let inv = gram
            .try_inverse()
            .ok_or_else(|| ControlError::Params("robot layout cannot produce every wrench".into()))?;
        Ok(Self {
            map: w.transpose() * inv,
            max_thrust: DVector::from_iterator(n, robots.iter().map(|r| r.max_thrust)),
            min_thrust: DVector::from_iterator(n, robots.iter().map(|r| r.min_thrust)),
        })
    }

    /// Distributes `[T, τx, τy, τz]`. If a robot would exceed its limit the
    /// collective thrust is lowered first so the torques survive; what is
    /// left over is clipped per robot.
    pub fn mix(&self, wrench: &Vector4<f64>) -> DVector<f64> {
        let collective = self.map.column(0).into_owned();
        let torque = self.map.columns(1, 3) * wrench.fixed_rows::<3>(1);
        let mut t = wrench[0].max(0.0);
        for j in 0..collective.len() {
            let per = collective[j];
            if per > 0.0 && torque[j] + per * t > self.max_thrust[j] {
                t = t.min(((self.max_thrust[j] - torque[j]) / per).max(0.0));
            }
        }
        let mut u = collective * t + torque;
        for j in 0..u.len() {
            u[j] = u[j].clamp(self.min_thrust[j], self.max_thrust[j]);
        }
        u
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PidController {
    pub params: PidParams,
    pub mixer: Mixer,
    gravity: f64,
    pos_int: Vector3<f64>,
    att_int: Vector3<f64>,
}

impl PidController {
    pub fn new(robots: &[RobotSpec], params: PidParams, gravity: f64) -> Result<Self, ControlError> {
        if !(params.mass > 0.0 && params.max_tilt > 0.0 && params.inertia.iter().all(|j| *j > 0.0)) {
            return Err(ControlError::Params(
                "PID mass, inertia and tilt limit must be positive".into(),
            ));
        }
        Ok(Self {
            mixer: Mixer::new(robots)?,
            params,
            gravity,
            pos_int: Vector3::zeros(),
            att_int: Vector3::zeros(),
        })
    }

    /// Starts the altitude integrator at the hover thrust of `mass`, so a
    /// run can begin in equilibrium without an initial sag.
    pub fn preload_hover(&mut self, mass: f64) {
        let ki = self.params.position[2].ki;
        if ki > 0.0 {
            self.pos_int.z = (mass / self.params.mass - 1.0) * self.gravity / ki;
        }
    }

    /// One control period. `xi` is the state minus the reference pose.
    pub fn step(&mut self, xi: &StateVector, dt: f64) -> DVector<f64> {
        let p = &self.params;
        let g = self.gravity;
        let lim = p.integral_limit;

        let pos_err = -Vector3::new(xi[idx::X], xi[idx::Y], xi[idx::Z]);
        let vel = Vector3::new(xi[idx::VX], xi[idx::VY], xi[idx::VZ]);
        self.pos_int = (self.pos_int + pos_err * dt).map(|v| v.clamp(-lim, lim));
        let acc = Vector3::from_fn(|k, _| {
            let gk = p.position[k];
            gk.kp * pos_err[k] + gk.ki * self.pos_int[k] - gk.kd * vel[k]
        });

        // Small-angle hover: ẍ = gθ, ÿ = −gφ.
        let roll_ref = (-acc.y / g).clamp(-p.max_tilt, p.max_tilt);
        let pitch_ref = (acc.x / g).clamp(-p.max_tilt, p.max_tilt);
        let collective = p.mass * (g + acc.z);

        let att_err = Vector3::new(roll_ref - xi[idx::ROLL], pitch_ref - xi[idx::PITCH], -xi[idx::YAW]);
        let rates = Vector3::new(xi[idx::P], xi[idx::Q], xi[idx::R]);
        self.att_int = (self.att_int + att_err * dt).map(|v| v.clamp(-lim, lim));
        let ang_acc = Vector3::from_fn(|k, _| {
            let gk = p.attitude[k];
            gk.kp * att_err[k] + gk.ki * self.att_int[k] - gk.kd * rates[k]
        });
        let torque = Matrix3::from_diagonal(&Vector3::from(p.inertia)) * ang_acc;

        self.mixer.mix(&Vector4::new(collective, torque.x, torque.y, torque.z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cotrans_core::presets;

    #[test]
    fn mixer_is_a_right_inverse() {
        let robots = presets::lshape_payload().robots;
        let m = Mixer::new(&robots).unwrap();
        let w = Vector4::new(30.0, 0.1, -0.2, 0.05);
        let u = &m.map * w;
        let back = Vector4::new(
            u.sum(),
            robots.iter().zip(u.iter()).map(|(r, v)| r.attach_position[1] * v).sum(),
            robots
                .iter()
                .zip(u.iter())
                .map(|(r, v)| -r.attach_position[0] * v)
                .sum(),
            robots
                .iter()
                .zip(u.iter())
                .map(|(r, v)| r.spin() * r.thrust_torque_coeff * v)
                .sum(),
        );
        assert!((back - w).amax() < 1e-12);
    }

    #[test]
    fn saturation_sheds_collective_before_torque() {
        let robots = presets::rectangle_payload().robots;
        let m = Mixer::new(&robots).unwrap();
        let w = Vector4::new(80.0, 1.0, 0.0, 0.0);
        let u = m.mix(&w);
        for (r, v) in robots.iter().zip(u.iter()) {
            assert!(*v <= r.max_thrust + 1e-12);
        }
        let roll: f64 = robots.iter().zip(u.iter()).map(|(r, v)| r.attach_position[1] * v).sum();
        assert!((roll - 1.0).abs() < 1e-9);
        assert!(u.sum() < 80.0);
    }

    #[test]
    fn bandwidth_gains_place_the_poles() {
        let g = PidGains::from_bandwidth(2.0, 0.8, 0.5);
        // (s + p)(s² + 2ζωs + ω²) = s³ + kd s² + kp s + ki with p = 0.5ω
        let (a, w, z) = (0.5 * 2.0, 2.0, 0.8);
        assert!((g.kd - (a + 2.0 * z * w)).abs() < 1e-12);
        assert!((g.kp - (w * w + 2.0 * z * w * a)).abs() < 1e-12);
        assert!((g.ki - a * w * w).abs() < 1e-12);
    }
}
