use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::controller::{ControllerError, ControllerParams, ControllerState};
use super::genrou::{
    genrou_derivatives_at_current, network_to_dq, GenrouParams, MachineOutputs, MachineState,
};
use crate::Phasor;

#[derive(Debug, Error)]
pub enum InitError {
    #[error("power-flow initialization did not converge (residual {residual:.3e} after {iters} iterations)")]
    NoConvergence { residual: f64, iters: usize },
    #[error("terminal voltage magnitude must be positive")]
    ZeroVoltage,
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("singular Jacobian in power-flow initialization")]
    SingularJacobian,
}

/// Machine and controller states pinned at a dispatched operating point.
#[derive(Debug, Clone)]
pub struct Initialized {
    pub machine: MachineState,
    pub exciter: Option<ControllerState>,
    pub governor: Option<ControllerState>,
    pub e_fd0: f64,
    pub p_m0: f64,
    pub outputs: MachineOutputs,
}

/// Solve the machine equilibrium for dispatch `p_mw`/`q_mvar` at terminal
/// voltage `v_term` (network frame, shared voltage base) and initialize the
/// attached controllers so they hold `e_fd0` and `p_m0`.
///
/// The six steady-state equations (four rotor windings at rest plus the two
/// stator relations) are solved by Newton iteration with a finite-difference
/// Jacobian, seeded from the unsaturated closed form.
pub fn init_from_powerflow(
    p_mw: f64,
    q_mvar: f64,
    v_term: Phasor,
    params: &GenrouParams,
    exciter: Option<&ControllerParams>,
    governor: Option<&ControllerParams>,
) -> Result<Initialized, InitError> {
    if v_term.norm() <= 0.0 {
        return Err(InitError::ZeroVoltage);
    }
    let s_pu = Phasor::new(p_mw / params.mva_base, q_mvar / params.mva_base);
    let i_inj = s_pu.conj() / v_term.conj();

    // unsaturated closed-form seed
    let delta0 = (v_term + Phasor::i() * params.xq * i_inj).arg();
    let (i_d0, i_q0) = network_to_dq(i_inj.re, i_inj.im, delta0);
    let (v_d0, v_q0) = network_to_dq(v_term.re, v_term.im, delta0);
    let eqp0 = v_q0 + params.xd_p * i_d0;
    let edp0 = v_d0 - params.xq_p * i_q0;
    let mut x = DVector::from_vec(vec![
        delta0,
        eqp0,
        edp0,
        eqp0 - (params.xd_p - params.xl) * i_d0,
        -edp0 - (params.xq_p - params.xl) * i_q0,
        eqp0 + (params.xd - params.xd_p) * i_d0,
    ]);

    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let state = MachineState {
            delta: x[0],
            omega: 0.0,
            edp: x[2],
            eqp: x[1],
            psidp: x[3],
            psiqp: x[4],
        };
        let e_fd = x[5];
        let (i_d, i_q) = network_to_dq(i_inj.re, i_inj.im, state.delta);
        let (v_d, v_q) = network_to_dq(v_term.re, v_term.im, state.delta);
        let (deriv, _) = genrou_derivatives_at_current(&state, e_fd, 0.0, i_d, i_q, params);
        let (psi_d_pp, psi_q_pp) = super::genrou::subtransient_flux(&state, params);
        DVector::from_vec(vec![
            deriv[3] * params.td0_p,
            deriv[4] * params.td0_pp,
            deriv[2] * params.tq0_p,
            deriv[5] * params.tq0_pp,
            (psi_d_pp - params.xd_pp * i_d) - v_q,
            (-psi_q_pp + params.xq_pp * i_q) - v_d,
        ])
    };

    let mut last_norm = f64::INFINITY;
    for iter in 0..60 {
        let r = residual(&x);
        last_norm = r.amax();
        if last_norm < 1e-12 {
            break;
        }
        let mut jac = DMatrix::zeros(6, 6);
        for j in 0..6 {
            let h = 1e-7 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            xp[j] += h;
            let rp = residual(&xp);
            for i in 0..6 {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let lu = jac.lu();
        let step = lu.solve(&(-&r)).ok_or(InitError::SingularJacobian)?;
        x += step;
        if iter == 59 {
            return Err(InitError::NoConvergence { residual: last_norm, iters: 60 });
        }
    }
    if !(last_norm < 1e-10) {
        return Err(InitError::NoConvergence { residual: last_norm, iters: 60 });
    }

    let machine = MachineState {
        delta: x[0],
        omega: 0.0,
        edp: x[2],
        eqp: x[1],
        psidp: x[3],
        psiqp: x[4],
    };
    let e_fd0 = x[5];
    let (i_d, i_q) = network_to_dq(i_inj.re, i_inj.im, machine.delta);
    let (_, outputs) = genrou_derivatives_at_current(&machine, e_fd0, 0.0, i_d, i_q, params);
    let p_m0 = outputs.p_e;

    let v_mag = v_term.norm();
    let exciter_state = exciter.map(|c| c.init(v_mag, e_fd0, p_m0)).transpose()?;
    let governor_state = governor.map(|c| c.init(v_mag, e_fd0, p_m0)).transpose()?;

    Ok(Initialized { machine, exciter: exciter_state, governor: governor_state, e_fd0, p_m0, outputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::genrou::genrou_derivatives;
    use approx::assert_relative_eq;

    #[test]
    fn open_circuit_point() {
        let p = GenrouParams::example();
        let init = init_from_powerflow(0.0, 0.0, Phasor::new(1.0, 0.0), &p, None, None).unwrap();
        assert_relative_eq!(init.machine.omega, 0.0);
        assert_relative_eq!(init.p_m0, 0.0, epsilon = 1e-10);
        assert_relative_eq!(init.outputs.i_d, 0.0, epsilon = 1e-10);
        assert_relative_eq!(init.outputs.i_q, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn initialized_state_is_a_fixed_point() {
        let mut p = GenrouParams::example();
        p.s_1_0 = 0.1;
        p.s_1_2 = 0.4;
        let v = Phasor::from_polar(1.02, 0.1);
        let init = init_from_powerflow(57.85, 17.38, v, &p, None, None).unwrap();
        let (deriv, out) = genrou_derivatives(&init.machine, init.e_fd0, init.p_m0, v, &p).unwrap();
        for (i, d) in deriv.iter().enumerate() {
            assert!(d.abs() < 1e-8, "derivative {i} = {d} at the initialized point");
        }
        // terminal power matches the dispatch
        assert_relative_eq!(out.p_e, 0.5785, epsilon = 1e-8);
        let s = v * Phasor::new(out.i_re, out.i_im).conj();
        assert_relative_eq!(s.re, 0.5785, epsilon = 1e-8);
        assert_relative_eq!(s.im, 0.1738, epsilon = 1e-8);
    }

    #[test]
    fn infeasible_field_demand_is_an_error() {
        let p = GenrouParams::example();
        let exciter = ControllerParams::Sexs(crate::models::SexsParams {
            e_max: 1.0,
            ..Default::default()
        });
        let err = init_from_powerflow(80.0, 40.0, Phasor::new(1.0, 0.0), &p, Some(&exciter), None);
        assert!(err.is_err(), "Efd above Emax must be rejected");
    }
}
