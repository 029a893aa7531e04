use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::saturation::saturation;
use crate::Phasor;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid GENROU parameters: {0}")]
    InvalidParams(String),
    #[error("operating point infeasible: {0}")]
    Infeasible(String),
}

/// Round-rotor machine constants, per-unit on `mva_base`.
///
/// Time constants in seconds, reactances and saturation factors
/// dimensionless, `freq_base` in Hz. The serde names are the parameter-file
/// keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenrouParams {
    #[serde(rename = "Xd")]
    pub xd: f64,
    #[serde(rename = "Xq")]
    pub xq: f64,
    #[serde(rename = "Xd_p")]
    pub xd_p: f64,
    #[serde(rename = "Xq_p")]
    pub xq_p: f64,
    #[serde(rename = "Xd_pp")]
    pub xd_pp: f64,
    #[serde(rename = "Xq_pp")]
    pub xq_pp: f64,
    #[serde(rename = "Xl")]
    pub xl: f64,
    #[serde(rename = "Td0_p")]
    pub td0_p: f64,
    #[serde(rename = "Tq0_p")]
    pub tq0_p: f64,
    #[serde(rename = "Td0_pp")]
    pub td0_pp: f64,
    #[serde(rename = "Tq0_pp")]
    pub tq0_pp: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "D", default)]
    pub d: f64,
    #[serde(rename = "S_1_0", default)]
    pub s_1_0: f64,
    #[serde(rename = "S_1_2", default)]
    pub s_1_2: f64,
    pub mva_base: f64,
    #[serde(default = "default_freq_base")]
    pub freq_base: f64,
}

fn default_freq_base() -> f64 {
    60.0
}

impl GenrouParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |msg: String| Err(ModelError::InvalidParams(msg));
        let all = [
            self.xd, self.xq, self.xd_p, self.xq_p, self.xd_pp, self.xq_pp, self.xl, self.td0_p,
            self.tq0_p, self.td0_pp, self.tq0_pp, self.h, self.d, self.s_1_0, self.s_1_2,
            self.mva_base, self.freq_base,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("GenrouParams"));
        }
        if !(self.xd > self.xd_p && self.xd_p > self.xd_pp && self.xd_pp > self.xl && self.xl >= 0.0) {
            return err(format!(
                "need Xd > Xd' > Xd'' > Xl >= 0, got {} / {} / {} / {}",
                self.xd, self.xd_p, self.xd_pp, self.xl
            ));
        }
        if !(self.xq > self.xq_p && self.xq_p > self.xq_pp && self.xq_pp > self.xl) {
            return err(format!(
                "need Xq > Xq' > Xq'' > Xl, got {} / {} / {} / {}",
                self.xq, self.xq_p, self.xq_pp, self.xl
            ));
        }
        for (name, t) in [
            ("Td0_p", self.td0_p),
            ("Tq0_p", self.tq0_p),
            ("Td0_pp", self.td0_pp),
            ("Tq0_pp", self.tq0_pp),
        ] {
            if t <= 0.0 {
                return err(format!("time constant {name} must be > 0, got {t}"));
            }
        }
        if self.h <= 0.0 {
            return err(format!("inertia H must be > 0, got {}", self.h));
        }
        if self.d < 0.0 || self.s_1_0 < 0.0 || self.s_1_2 < 0.0 {
            return err("D, S_1_0, S_1_2 must be >= 0".to_string());
        }
        if self.mva_base <= 0.0 || self.freq_base <= 0.0 {
            return err("mva_base and freq_base must be > 0".to_string());
        }
        Ok(())
    }

    /// Synchronous angular frequency, rad/s.
    pub fn omega_base(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.freq_base
    }

    /// Typical round-rotor data set used by unit tests.
    pub fn example() -> Self {
        Self {
            xd: 1.8,
            xq: 1.7,
            xd_p: 0.3,
            xq_p: 0.55,
            xd_pp: 0.25,
            xq_pp: 0.25,
            xl: 0.15,
            td0_p: 6.5,
            tq0_p: 1.0,
            td0_pp: 0.035,
            tq0_pp: 0.06,
            h: 4.0,
            d: 0.0,
            s_1_0: 0.0,
            s_1_2: 0.0,
            mva_base: 100.0,
            freq_base: 60.0,
        }
    }
}

/// Machine state vector: rotor angle (rad, network frame), speed deviation
/// (p.u.), transient voltages and the damper-winding fluxes the unknown-input
/// filter estimates alongside them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineState {
    pub delta: f64,
    pub omega: f64,
    pub edp: f64,
    pub eqp: f64,
    pub psidp: f64,
    pub psiqp: f64,
}

impl MachineState {
    pub const DIM: usize = 6;

    pub fn to_array(&self) -> [f64; 6] {
        [self.delta, self.omega, self.edp, self.eqp, self.psidp, self.psiqp]
    }

    pub fn from_array(v: &[f64]) -> Self {
        Self { delta: v[0], omega: v[1], edp: v[2], eqp: v[3], psidp: v[4], psiqp: v[5] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Algebraic outputs that accompany a derivative evaluation. Currents are
/// per-unit on the machine base; `(i_re, i_im)` is `(i_d, i_q)` rotated into
/// the network frame by the rotor angle.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct MachineOutputs {
    pub i_d: f64,
    pub i_q: f64,
    pub i_re: f64,
    pub i_im: f64,
    pub p_e: f64,
    pub xad_ifd: f64,
}

/// Rotate a network-frame pair into the rotor dq frame (q-axis at `delta`).
pub fn network_to_dq(re: f64, im: f64, delta: f64) -> (f64, f64) {
    let (s, c) = delta.sin_cos();
    (re * s - im * c, re * c + im * s)
}

/// Rotate a rotor-frame dq pair back into the network frame.
pub fn dq_to_network(d: f64, q: f64, delta: f64) -> (f64, f64) {
    let (s, c) = delta.sin_cos();
    (d * s + q * c, -d * c + q * s)
}

/// Reactance-ladder coupling factors shared by the flux and field equations.
struct Ladder {
    gd1: f64,
    gq1: f64,
    gd2: f64,
    gq2: f64,
}

impl Ladder {
    fn of(p: &GenrouParams) -> Self {
        let dd = p.xd_p - p.xl;
        let dq = p.xq_p - p.xl;
        Self {
            gd1: (p.xd_pp - p.xl) / dd,
            gq1: (p.xq_pp - p.xl) / dq,
            gd2: (p.xd_p - p.xd_pp) / (dd * dd),
            gq2: (p.xq_p - p.xq_pp) / (dq * dq),
        }
    }
}

/// Subtransient flux linkages behind `Xd''`/`Xq''` implied by the state.
pub fn subtransient_flux(state: &MachineState, p: &GenrouParams) -> (f64, f64) {
    let l = Ladder::of(p);
    let psi_d_pp = l.gd1 * state.eqp + (1.0 - l.gd1) * state.psidp;
    let psi_q_pp = -l.gq1 * state.edp + (1.0 - l.gq1) * state.psiqp;
    (psi_d_pp, psi_q_pp)
}

/// Stator currents drawn when the terminal is held at `v_term` (network
/// frame, shared voltage base). Returns machine-base `(i_d, i_q)`.
pub fn stator_currents(state: &MachineState, v_term: Phasor, p: &GenrouParams) -> (f64, f64) {
    let (psi_d_pp, psi_q_pp) = subtransient_flux(state, p);
    let (v_d, v_q) = network_to_dq(v_term.re, v_term.im, state.delta);
    let i_d = (psi_d_pp - v_q) / p.xd_pp;
    let i_q = (v_d + psi_q_pp) / p.xq_pp;
    (i_d, i_q)
}

fn outputs_from_currents(state: &MachineState, i_d: f64, i_q: f64, p: &GenrouParams) -> MachineOutputs {
    let l = Ladder::of(p);
    let (psi_d_pp, psi_q_pp) = subtransient_flux(state, p);
    let psi_d = psi_d_pp - p.xd_pp * i_d;
    let psi_q = psi_q_pp - p.xq_pp * i_q;
    let p_e = psi_d * i_q - psi_q * i_d;
    let se = saturation((psi_d_pp * psi_d_pp + psi_q_pp * psi_q_pp).sqrt(), p);
    let xad_ifd = state.eqp
        + (p.xd - p.xd_p) * (i_d - l.gd2 * (state.psidp + (p.xd_p - p.xl) * i_d - state.eqp))
        + se * psi_d_pp;
    let (i_re, i_im) = dq_to_network(i_d, i_q, state.delta);
    MachineOutputs { i_d, i_q, i_re, i_im, p_e, xad_ifd }
}

/// State derivatives with the stator currents already known (the filter's
/// transition function, where the measured injection is an input).
pub fn genrou_derivatives_at_current(
    state: &MachineState,
    e_fd: f64,
    p_mech: f64,
    i_d: f64,
    i_q: f64,
    p: &GenrouParams,
) -> ([f64; 6], MachineOutputs) {
    let l = Ladder::of(p);
    let out = outputs_from_currents(state, i_d, i_q, p);
    let (psi_d_pp, psi_q_pp) = subtransient_flux(state, p);
    let se = saturation((psi_d_pp * psi_d_pp + psi_q_pp * psi_q_pp).sqrt(), p);

    let d_delta = p.omega_base() * state.omega;
    let d_omega = (p_mech - out.p_e - p.d * state.omega) / (2.0 * p.h);
    let d_eqp = (e_fd - out.xad_ifd) / p.td0_p;
    let d_psidp = (-state.psidp + state.eqp - (p.xd_p - p.xl) * i_d) / p.td0_pp;
    // q-axis mirror of the field equation; saturation scaled by the
    // reactance ratio as in the d-axis ladder
    let xaq_i1q = state.edp
        - (p.xq - p.xq_p) * (i_q - l.gq2 * (state.psiqp + (p.xq_p - p.xl) * i_q + state.edp))
        - se * psi_q_pp * (p.xq - p.xl) / (p.xd - p.xl);
    let d_edp = -xaq_i1q / p.tq0_p;
    let d_psiqp = (-state.psiqp - state.edp - (p.xq_p - p.xl) * i_q) / p.tq0_pp;

    ([d_delta, d_omega, d_edp, d_eqp, d_psidp, d_psiqp], out)
}

/// State derivatives and algebraic outputs with the terminal voltage held at
/// `v_term` (simulation and event-playback entry point).
pub fn genrou_derivatives(
    state: &MachineState,
    e_fd: f64,
    p_mech: f64,
    v_term: Phasor,
    p: &GenrouParams,
) -> Result<([f64; 6], MachineOutputs), ModelError> {
    if !state.is_finite() {
        return Err(ModelError::NonFinite("MachineState"));
    }
    if !(e_fd.is_finite() && p_mech.is_finite() && v_term.re.is_finite() && v_term.im.is_finite()) {
        return Err(ModelError::NonFinite("machine inputs"));
    }
    let (psi_d_pp, psi_q_pp) = subtransient_flux(state, p);
    let flux = (psi_d_pp * psi_d_pp + psi_q_pp * psi_q_pp).sqrt();
    if !flux.is_finite() {
        return Err(ModelError::NonFinite("subtransient flux magnitude"));
    }
    let (i_d, i_q) = stator_currents(state, v_term, p);
    Ok(genrou_derivatives_at_current(state, e_fd, p_mech, i_d, i_q, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn frame_rotation_round_trip() {
        for k in 0..50 {
            let delta = -3.0 + 0.13 * k as f64;
            let (re, im) = (0.7 - 0.01 * k as f64, -0.4 + 0.02 * k as f64);
            let (d, q) = network_to_dq(re, im, delta);
            let (re2, im2) = dq_to_network(d, q, delta);
            assert_relative_eq!(re, re2, epsilon = 1e-12);
            assert_relative_eq!(im, im2, epsilon = 1e-12);
        }
    }

    #[test]
    fn open_circuit_carries_no_current() {
        // terminal voltage equal to the internal EMF of an unloaded machine
        let p = GenrouParams::example();
        let eqp = 1.0;
        let state = MachineState { delta: 0.0, omega: 0.0, edp: 0.0, eqp, psidp: eqp, psiqp: 0.0 };
        let v = Phasor::new(1.0, 0.0); // q-axis at delta = 0 carries the EMF
        let (_, out) = genrou_derivatives(&state, eqp, 0.0, v, &p).unwrap();
        assert_relative_eq!(out.i_d, 0.0, epsilon = 1e-12);
        assert_relative_eq!(out.i_q, 0.0, epsilon = 1e-12);
        assert_relative_eq!(out.p_e, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_finite_inputs() {
        let p = GenrouParams::example();
        let state = MachineState { delta: f64::NAN, omega: 0.0, edp: 0.0, eqp: 1.0, psidp: 1.0, psiqp: 0.0 };
        assert!(genrou_derivatives(&state, 1.0, 0.0, Phasor::new(1.0, 0.0), &p).is_err());
    }

    #[test]
    fn param_ordering_is_enforced() {
        let mut p = GenrouParams::example();
        p.xd_pp = p.xd_p + 0.1;
        assert!(p.validate().is_err());
        let mut p = GenrouParams::example();
        p.td0_p = 0.0;
        assert!(p.validate().is_err());
        assert!(GenrouParams::example().validate().is_ok());
    }
}
