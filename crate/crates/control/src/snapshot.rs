//! Mid-run snapshots of the proposed controller in the design archive
//! format.
//!
//! Per-robot rows of `robot_state` are `[φ, u0, acquired, has_lpf, lpf]`
//! and rows of `robot_params` are `[k_hi, k_lo, U_p, U_n, slope]`, in the
//! controller's robot order.

use cotrans_core::archive::MatrixArchive;
use nalgebra::DMatrix;

use crate::{AsscParams, AsscState, ControlError, ProposedController};

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn fixed<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_iterator(R, C, m.iter().copied())
}

pub fn snapshot(ctrl: &ProposedController) -> MatrixArchive {
    let n = ctrl.robots.len();
    let mut a = MatrixArchive::new();
    a.insert("F", fixed(&ctrl.consts.f));
    a.insert("G", fixed(&ctrl.consts.g));
    a.insert("C", fixed(&ctrl.consts.c));
    a.insert("D_hat", fixed(&ctrl.consts.d_hat));
    a.insert_scalar("lpf_cutoff_hz", ctrl.lpf_cutoff_hz);
    let mut params = DMatrix::zeros(n, 5);
    let mut state = DMatrix::zeros(n, 5);
    for (j, rc) in ctrl.robots.iter().enumerate() {
        let p = &rc.params;
        params
            .row_mut(j)
            .copy_from_slice(&[p.k_hi, p.k_lo, p.u_max, p.u_min, p.slope]);
        let s = &rc.state;
        state.row_mut(j).copy_from_slice(&[
            s.phi,
            s.u0,
            flag(s.u0_acquired),
            flag(s.lpf.is_some()),
            s.lpf.unwrap_or(0.0),
        ]);
    }
    a.insert("robot_params", params);
    a.insert("robot_state", state);
    a
}

/// Overwrites constants, parameters and per-robot state from a snapshot
/// taken of a controller with the same robot count.
pub fn restore(ctrl: &mut ProposedController, a: &MatrixArchive) -> Result<(), ControlError> {
    let n = ctrl.robots.len();
    let get = |label: &str, r: usize, c: usize| {
        a.get_shaped(label, r, c)
            .map_err(|e| ControlError::Archive(e.to_string()))
    };
    let f = get("F", 4, 12)?;
    let g = get("G", 4, 4)?;
    let c = get("C", 4, 12)?;
    let d_hat = get("D_hat", 4, 4)?;
    let cutoff = get("lpf_cutoff_hz", 1, 1)?[(0, 0)];
    let params = get("robot_params", n, 5)?;
    let state = get("robot_state", n, 5)?;
    let mut next = Vec::with_capacity(n);
    for j in 0..n {
        let p = AsscParams {
            k_hi: params[(j, 0)],
            k_lo: params[(j, 1)],
            u_max: params[(j, 2)],
            u_min: params[(j, 3)],
            slope: params[(j, 4)],
        };
        p.validate()?;
        let s = AsscState {
            phi: state[(j, 0)],
            u0: state[(j, 1)],
            u0_acquired: state[(j, 2)] != 0.0,
            lpf: (state[(j, 3)] != 0.0).then_some(state[(j, 4)]),
        };
        next.push((p, s));
    }
    ctrl.consts.f.copy_from_slice(f.as_slice());
    ctrl.consts.g.copy_from_slice(g.as_slice());
    ctrl.consts.c.copy_from_slice(c.as_slice());
    ctrl.consts.d_hat.copy_from_slice(d_hat.as_slice());
    ctrl.lpf_cutoff_hz = cutoff;
    for (rc, (p, s)) in ctrl.robots.iter_mut().zip(next) {
        rc.params = p;
        rc.state = s;
    }
    Ok(())
}
