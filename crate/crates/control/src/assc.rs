//! Variable-gain integral switching law run by every robot.

use serde::{Deserialize, Serialize};

use crate::ControlError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsscParams {
    /// Gain while `φ·η > 0` (after hover thrust is known).
    pub k_hi: f64,
    /// Gain otherwise, and always before acquisition.
    pub k_lo: f64,
    /// Thrust limits `U_p`, `U_n` of this robot, N.
    pub u_max: f64,
    pub u_min: f64,
    /// Slope of the linear part of `ρ`, N per unit `φ`.
    pub slope: f64,
}

impl AsscParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        let ok = self.k_lo > 0.0
            && self.k_lo <= self.k_hi
            && self.k_hi.is_finite()
            && self.slope > 0.0
            && self.slope.is_finite()
            && self.u_min >= 0.0
            && self.u_max > self.u_min
            && self.u_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ControlError::Params(format!("{self:?}")))
        }
    }

    /// Break points `(φ_n, φ_p)` of `ρ` for a hover thrust `u0`.
    pub fn phi_limits(&self, u0: f64) -> (f64, f64) {
        ((self.u_min - u0) / self.slope, (self.u_max - u0) / self.slope)
    }

    /// Saturated linear map from `φ` to the thrust offset around `u0`.
    ///
    /// Continuous: the linear branch meets both saturations at the break
    /// points, so the thrust `ρ + u0` always lies in `[U_n, U_p]`.
    pub fn rho(&self, phi: f64, u0: f64) -> f64 {
        let (phi_n, phi_p) = self.phi_limits(u0);
        if phi > phi_p {
            self.u_max - u0
        } else if phi <= phi_n {
            self.u_min - u0
        } else {
            self.slope * phi
        }
    }

    pub fn gain(&self, state: &AsscState, eta: f64) -> f64 {
        if state.u0_acquired && state.phi * eta > 0.0 {
            self.k_hi
        } else {
            self.k_lo
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsscState {
    pub phi: f64,
    /// Hover thrust around which `ρ` is centered, N.
    pub u0: f64,
    pub u0_acquired: bool,
    /// Low-pass filtered command; `None` until the first sample.
    pub lpf: Option<f64>,
}

impl AsscState {
    pub fn new(u0: f64) -> Self {
        Self {
            phi: 0.0,
            u0,
            u0_acquired: false,
            lpf: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsscOutput {
    /// `u_s = ρ(φ) + u0`, N.
    pub thrust: f64,
    /// Gain used to advance `φ` this step.
    pub gain: f64,
}

/// One explicit step: the output uses the current `φ`, then `φ` is advanced
/// by `−K·η·dt`.
pub fn assc_step(params: &AsscParams, state: &AsscState, eta: f64, dt: f64) -> (AsscOutput, AsscState) {
    debug_assert!(dt > 0.0);
    let thrust = params.rho(state.phi, state.u0) + state.u0;
    let gain = params.gain(state, eta);
    let next = AsscState {
        phi: state.phi - gain * eta * dt,
        ..*state
    };
    (AsscOutput { thrust, gain }, next)
}

/// Feeds the commanded thrust through a first-order low-pass filter; on
/// `trigger` the filtered value becomes `u0`, `φ` restarts from zero and the
/// variable gain is enabled.
///
/// The first sample initializes the filter, so a trigger on the very first
/// call takes the current command as `u0`.
pub fn acquire_u0(state: &AsscState, commanded: f64, dt: f64, cutoff_hz: f64, trigger: bool) -> AsscState {
    let lpf = match state.lpf {
        None => commanded,
        Some(prev) => {
            let tc = 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz);
            prev + dt / (tc + dt) * (commanded - prev)
        }
    };
    let mut next = AsscState {
        lpf: Some(lpf),
        ..*state
    };
    if trigger {
        next.u0 = lpf;
        next.u0_acquired = true;
        next.phi = 0.0;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> AsscParams {
        AsscParams {
            k_hi: 49.0,
            k_lo: 7.0,
            u_max: 12.0,
            u_min: 0.0,
            slope: 0.5,
        }
    }

    #[test]
    fn zero_phi_returns_hover_thrust() {
        let s = AsscState::new(4.0);
        let (out, _) = assc_step(&params(), &s, 123.0, 0.005);
        assert_eq!(out.thrust, 4.0);
    }

    #[test]
    fn high_gain_needs_acquisition() {
        let mut s = AsscState::new(4.0);
        s.phi = 1.0;
        assert_eq!(assc_step(&params(), &s, 1.0, 0.005).0.gain, 7.0);
        s.u0_acquired = true;
        assert_eq!(assc_step(&params(), &s, 1.0, 0.005).0.gain, 49.0);
        assert_eq!(assc_step(&params(), &s, -1.0, 0.005).0.gain, 7.0);
    }

    #[test]
    fn far_above_break_point_gives_max_thrust() {
        let p = params();
        let mut s = AsscState::new(4.0);
        s.phi = 1e6;
        assert_eq!(assc_step(&p, &s, 0.0, 0.005).0.thrust, p.u_max);
        s.phi = -1e6;
        assert_eq!(assc_step(&p, &s, 0.0, 0.005).0.thrust, p.u_min);
    }

    #[test]
    fn filter_settles_on_constant_command() {
        let mut s = AsscState::new(4.0);
        for k in 0..2000 {
            s = acquire_u0(&s, 5.3, 0.005, 5.0, k == 1999);
        }
        assert!((s.u0 - 5.3).abs() < 0.01 * 5.3);
        assert!(s.u0_acquired);
        assert_eq!(s.phi, 0.0);
    }

    #[test]
    fn early_trigger_uses_current_command() {
        let s = acquire_u0(&AsscState::new(4.0), 6.0, 0.005, 5.0, true);
        assert_eq!(s.u0, 6.0);
    }
}
