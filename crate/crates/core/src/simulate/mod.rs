//! Fixed-step time-domain simulation of the single-bus test bench: five
//! units behind one bus tied through a line to an infinite bus, with
//! optional forced-oscillation injection on one unit. Produces ground-truth
//! traces and the synthetic point-of-connection measurements.

mod bench;
mod injection;

pub use bench::{BenchState, SyncState, TestBench, Unit, UnitInit, UnitKind, UnitState};
pub use injection::{efd_modulation, gate_square, EfdModulation, FoInjection, GateSquare};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::models::{
    genrou_derivatives_at_current, ControllerOutputs, ControllerParams, ControllerState,
    GovernorInput, MachineOutputs, MachineState,
};
use crate::pmuio::PhasorTrace;
use crate::Phasor;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("network solve singular after {iterations} iteration(s): |det| = {det:.3e}")]
    NetworkSingular { det: f64, iterations: usize },
    #[error("state divergence at t = {t:.3} s: {what}")]
    Divergence { t: f64, what: String },
    #[error("unknown injection target unit '{0}'")]
    UnknownUnit(String),
    #[error("injection invalid: {0}")]
    BadInjection(String),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Init(#[from] crate::models::InitError),
    #[error(transparent)]
    Controller(#[from] crate::models::ControllerError),
}

/// Algebraic bus solution for one time point. Currents are per-unit on the
/// system base; `residual` is the Kirchhoff mismatch of the solved point.
#[derive(Debug, Clone)]
pub struct BusSolution {
    pub v: Phasor,
    pub i_line: Phasor,
    pub unit_currents: Vec<Phasor>,
    pub residual: f64,
}

/// Per-step record of one synchronous unit in the ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyncRecord {
    pub state: MachineState,
    pub e_fd: f64,
    pub p_mech: f64,
    pub out: MachineOutputs,
    pub gate: Option<f64>,
}

/// Everything the simulator knows, kept as the oracle for the estimator and
/// the playback stages.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroundTruthTrace {
    pub dt: f64,
    pub time: Vec<f64>,
    pub bus_v: Vec<Phasor>,
    pub line_i: Vec<Phasor>,
    pub unit_ids: Vec<String>,
    /// per-unit injected currents, system base, indexed like `unit_ids`
    pub unit_i: Vec<Vec<Phasor>>,
    pub sync: BTreeMap<String, Vec<SyncRecord>>,
}

/// Declarative scenario: which bench, which injection, how long.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub bench: Option<String>,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    pub injection: Option<FoInjection>,
    #[serde(default)]
    pub noise: Option<crate::pmuio::NoiseSpec>,
}

enum Override {
    None,
    Efd { unit: usize, value: f64 },
    Gate { unit: usize, value: f64 },
}

fn resolve_override(
    bench: &TestBench,
    injection: Option<&FoInjection>,
    t: f64,
) -> Result<Override, SimError> {
    let Some(inj) = injection else { return Ok(Override::None) };
    let idx = bench
        .unit_index(inj.unit())
        .ok_or_else(|| SimError::UnknownUnit(inj.unit().to_string()))?;
    match inj {
        FoInjection::EfdModulation { params, .. } => {
            let elapsed = t - params.start;
            if elapsed < 0.0 || elapsed > params.duration {
                return Ok(Override::None);
            }
            let mut value = efd_modulation(elapsed, params);
            if let UnitKind::Sync { exciter: Some(ControllerParams::Sexs(se)), .. } =
                &bench.units[idx].kind
            {
                value = value.clamp(se.e_min, se.e_max);
            }
            Ok(Override::Efd { unit: idx, value })
        }
        FoInjection::GateSquare { params, .. } => {
            let elapsed = t - params.start;
            if elapsed < 0.0 || elapsed > params.t_end {
                return Ok(Override::None);
            }
            let mut value = gate_square(elapsed, params);
            if let UnitKind::Sync { governor: Some(ControllerParams::Hygov(h)), .. } =
                &bench.units[idx].kind
            {
                value = value.clamp(h.g_min, h.g_max);
            } else {
                return Err(SimError::BadInjection(format!(
                    "gate injection target '{}' has no HYGOV governor",
                    inj.unit()
                )));
            }
            Ok(Override::Gate { unit: idx, value })
        }
    }
}

/// Pin the forced state component; returns which flat-vector entry must hold
/// a zero derivative while the override is active.
fn apply_override(state: &mut BenchState, ov: &Override) -> Option<(usize, usize)> {
    match ov {
        Override::None => None,
        Override::Efd { unit, value } => {
            if let UnitState::Sync(sync) = &mut state[*unit] {
                if let Some(ControllerState::Sexs { e_fd, .. }) = &mut sync.exciter {
                    *e_fd = *value;
                    // SEXS state layout: [x_ll, e_fd] after the 6 machine states
                    return Some((*unit, MachineState::DIM + 1));
                }
            }
            None
        }
        Override::Gate { unit, value } => {
            if let UnitState::Sync(sync) = &mut state[*unit] {
                if let Some(ControllerState::Hygov { gate, .. }) = &mut sync.governor {
                    *gate = *value;
                    let ex_len = sync.exciter.as_ref().map_or(0, |e| ControllerParams::state_to_vec(e).len());
                    // HYGOV layout: [filter, desired_gate, gate, flow]
                    return Some((*unit, MachineState::DIM + ex_len + 2));
                }
            }
            None
        }
    }
}

/// Solve the 2x2 linear bus equation: every synchronous unit is a voltage
/// source behind its subtransient reactances (linear in the bus voltage),
/// renewables are fixed current sources, and the line ties the bus to the
/// infinite bus.
pub fn solve_network(bench: &TestBench, state: &BenchState) -> Result<BusSolution, SimError> {
    let yline = 1.0 / bench.line;
    // A * [v_re, v_im]^T = b, accumulated in real 2x2 form
    let mut a = [[yline.re, -yline.im], [yline.im, yline.re]];
    let vinf = yline * bench.v_inf;
    let mut b = [vinf.re, vinf.im];

    for (unit, ustate) in bench.units.iter().zip(state.iter()) {
        let k = unit.base_ratio(bench.s_base);
        match (&unit.kind, ustate) {
            (UnitKind::Sync { params, .. }, UnitState::Sync(sync)) => {
                let (psi_d_pp, psi_q_pp) = crate::models::subtransient_flux_of(&sync.machine, params);
                let (s, c) = sync.machine.delta.sin_cos();
                let (i_d0, i_q0) = (psi_d_pp / params.xd_pp, psi_q_pp / params.xq_pp);
                let (isrc_re, isrc_im) = crate::models::dq_to_network(i_d0, i_q0, sync.machine.delta);
                b[0] += k * isrc_re;
                b[1] += k * isrc_im;
                let (xd, xq) = (params.xd_pp, params.xq_pp);
                a[0][0] += k * s * c * (1.0 / xd - 1.0 / xq);
                a[0][1] += k * (s * s / xd + c * c / xq);
                a[1][0] += k * -(c * c / xd + s * s / xq);
                a[1][1] += k * -(s * c * (1.0 / xd - 1.0 / xq));
            }
            (UnitKind::Renew { .. }, UnitState::Renew(r)) => {
                b[0] += k * r.i.re;
                b[1] += k * r.i.im;
            }
            _ => unreachable!("bench state shape mismatch"),
        }
    }

    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < 1e-12 {
        return Err(SimError::NetworkSingular { det, iterations: 1 });
    }
    let v = Phasor::new(
        (b[0] * a[1][1] - b[1] * a[0][1]) / det,
        (a[0][0] * b[1] - a[1][0] * b[0]) / det,
    );

    let mut unit_currents = Vec::with_capacity(bench.units.len());
    let mut total = Phasor::new(0.0, 0.0);
    for (unit, ustate) in bench.units.iter().zip(state.iter()) {
        let k = unit.base_ratio(bench.s_base);
        let i = match (&unit.kind, ustate) {
            (UnitKind::Sync { params, .. }, UnitState::Sync(sync)) => {
                let (i_d, i_q) = crate::models::stator_currents_of(&sync.machine, v, params);
                let (re, im) = crate::models::dq_to_network(i_d, i_q, sync.machine.delta);
                Phasor::new(re, im) * k
            }
            (UnitKind::Renew { .. }, UnitState::Renew(r)) => r.i * k,
            _ => unreachable!(),
        };
        total += i;
        unit_currents.push(i);
    }
    let i_line = (v - bench.v_inf) * yline;
    let residual = (total - i_line).norm();
    Ok(BusSolution { v, i_line, unit_currents, residual })
}

fn bench_derivatives(
    bench: &TestBench,
    state: &BenchState,
    bus: &BusSolution,
) -> Result<Vec<f64>, SimError> {
    let mut deriv = Vec::with_capacity(bench.state_dim());
    for (idx, (unit, ustate)) in bench.units.iter().zip(state.iter()).enumerate() {
        match (&unit.kind, ustate) {
            (UnitKind::Sync { params, exciter, governor }, UnitState::Sync(sync)) => {
                let (i_d, i_q) = crate::models::stator_currents_of(&sync.machine, bus.v, params);
                let input = GovernorInput {
                    v_mag: bus.v.norm(),
                    omega: sync.machine.omega,
                    p_e: 0.0,
                };
                let e_fd = match (&sync.exciter, exciter) {
                    (Some(st), Some(ps)) => match ps.output(st, &input) {
                        ControllerOutputs::Efd(e) => e,
                        ControllerOutputs::Pmech(_) => unreachable!("exciter emits Efd"),
                    },
                    _ => bench.init_info[idx].e_fd0,
                };
                let p_mech = match (&sync.governor, governor) {
                    (Some(st), Some(ps)) => match ps.output(st, &input) {
                        ControllerOutputs::Pmech(pm) => pm,
                        ControllerOutputs::Efd(_) => unreachable!("governor emits Pmech"),
                    },
                    _ => bench.init_info[idx].p_m0,
                };
                let (md, out) =
                    genrou_derivatives_at_current(&sync.machine, e_fd, p_mech, i_d, i_q, params);
                deriv.extend_from_slice(&md);
                let input = GovernorInput { p_e: out.p_e, ..input };
                if let (Some(st), Some(ps)) = (&sync.exciter, exciter) {
                    deriv.extend(ps.derivatives(st, &input));
                }
                if let (Some(st), Some(ps)) = (&sync.governor, governor) {
                    deriv.extend(ps.derivatives(st, &input));
                }
            }
            (UnitKind::Renew { params, p_pu, q_pu }, UnitState::Renew(r)) => {
                let d = params.derivative(r, *p_pu, *q_pu, bus.v);
                deriv.push(d.re);
                deriv.push(d.im);
            }
            _ => unreachable!(),
        }
    }
    Ok(deriv)
}

/// One classical 4-stage explicit step of the whole bench from `t` to
/// `t + ts`, with the network re-solved at every stage. Returns the new
/// state and the bus solution at `t + ts`.
pub fn step(
    bench: &TestBench,
    state: &BenchState,
    t: f64,
    injection: Option<&FoInjection>,
) -> Result<(BenchState, BusSolution), SimError> {
    let dt = bench.ts;
    let x0 = bench.state_to_vec(state);

    let eval = |x: &[f64], stage_t: f64| -> Result<Vec<f64>, SimError> {
        let mut s = bench.state_from_vec(x);
        let ov = resolve_override(bench, injection, stage_t)?;
        let pinned = apply_override(&mut s, &ov);
        let bus = solve_network(bench, &s)?;
        let mut d = bench_derivatives(bench, &s, &bus)?;
        if let Some((unit, offset)) = pinned {
            d[bench.unit_offset(unit) + offset] = 0.0;
        }
        Ok(d)
    };

    let k1 = eval(&x0, t)?;
    let k2 = eval(&vec_add(&x0, &k1, dt / 2.0), t + dt / 2.0)?;
    let k3 = eval(&vec_add(&x0, &k2, dt / 2.0), t + dt / 2.0)?;
    let k4 = eval(&vec_add(&x0, &k3, dt), t + dt)?;

    let mut x1 = x0;
    for i in 0..x1.len() {
        x1[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let mut next = bench.state_from_vec(&x1);
    let ov = resolve_override(bench, injection, t + dt)?;
    apply_override(&mut next, &ov);

    for (unit, ustate) in bench.units.iter().zip(next.iter()) {
        if let UnitState::Sync(sync) = ustate {
            if !sync.machine.is_finite() {
                return Err(SimError::Divergence {
                    t: t + dt,
                    what: format!("unit '{}' has a non-finite state", unit.id),
                });
            }
            if sync.machine.omega.abs() >= 0.2 {
                return Err(SimError::Divergence {
                    t: t + dt,
                    what: format!("unit '{}' speed deviation {:.3} p.u.", unit.id, sync.machine.omega),
                });
            }
        }
    }
    let bus = solve_network(bench, &next)?;
    Ok((next, bus))
}

fn vec_add(x: &[f64], k: &[f64], h: f64) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// Run a scenario from the bench equilibrium and return the ground truth
/// plus the noiseless point-of-connection measurement trace (bus voltage,
/// the one measured branch current, bus frequency). Measurement noise is a
/// downstream concern.
pub fn run_scenario(
    bench: &TestBench,
    injection: Option<&FoInjection>,
    duration: f64,
) -> Result<(GroundTruthTrace, PhasorTrace), SimError> {
    if let Some(inj) = injection {
        inj.validate().map_err(SimError::BadInjection)?;
    }
    let dt = bench.ts;
    let steps = (duration / dt).round() as usize;
    let mut state = bench.initial_state();
    let ov = resolve_override(bench, injection, 0.0)?;
    apply_override(&mut state, &ov);

    let n_units = bench.units.len();
    let mut truth = GroundTruthTrace {
        dt,
        unit_ids: bench.units.iter().map(|u| u.id.clone()).collect(),
        unit_i: vec![Vec::with_capacity(steps + 1); n_units],
        ..Default::default()
    };
    for unit in &bench.units {
        if unit.is_synchronous() {
            truth.sync.insert(unit.id.clone(), Vec::with_capacity(steps + 1));
        }
    }
    let mut freq = Vec::with_capacity(steps + 1);
    let mut prev_angle = None;

    let mut bus = solve_network(bench, &state)?;
    for k in 0..=steps {
        let t = k as f64 * dt;
        record(bench, &state, &bus, t, &mut truth)?;
        let angle = bus.v.arg();
        let f = match prev_angle {
            None => bench.freq_hz,
            Some(prev) => {
                let mut dtheta: f64 = angle - prev;
                while dtheta > std::f64::consts::PI {
                    dtheta -= 2.0 * std::f64::consts::PI;
                }
                while dtheta < -std::f64::consts::PI {
                    dtheta += 2.0 * std::f64::consts::PI;
                }
                bench.freq_hz + dtheta / (2.0 * std::f64::consts::PI * dt)
            }
        };
        freq.push(f);
        prev_angle = Some(angle);

        if k < steps {
            let (next, next_bus) = step(bench, &state, t, injection)?;
            state = next;
            bus = next_bus;
        }
    }

    let trace = PhasorTrace {
        dt,
        t0: 0.0,
        v: truth.bus_v.clone(),
        i: truth.line_i.clone(),
        freq,
        meta: crate::pmuio::TraceMeta {
            s_base_mva: bench.s_base,
            f_nominal_hz: bench.freq_hz,
            bus: bench.bus.clone(),
            branch: format!("{}->{}", bench.bus, bench.remote_bus),
            ..Default::default()
        },
    };
    Ok((truth, trace))
}

fn record(
    bench: &TestBench,
    state: &BenchState,
    bus: &BusSolution,
    t: f64,
    truth: &mut GroundTruthTrace,
) -> Result<(), SimError> {
    truth.time.push(t);
    truth.bus_v.push(bus.v);
    truth.line_i.push(bus.i_line);
    for (i, cur) in bus.unit_currents.iter().enumerate() {
        truth.unit_i[i].push(*cur);
    }
    for (idx, (unit, ustate)) in bench.units.iter().zip(state.iter()).enumerate() {
        if let (UnitKind::Sync { params, exciter, governor }, UnitState::Sync(sync)) =
            (&unit.kind, ustate)
        {
            let input =
                GovernorInput { v_mag: bus.v.norm(), omega: sync.machine.omega, p_e: 0.0 };
            let e_fd = match (&sync.exciter, exciter) {
                (Some(st), Some(ps)) => match ps.output(st, &input) {
                    ControllerOutputs::Efd(e) => e,
                    _ => unreachable!(),
                },
                _ => bench.init_info[idx].e_fd0,
            };
            let p_mech = match (&sync.governor, governor) {
                (Some(st), Some(ps)) => match ps.output(st, &input) {
                    ControllerOutputs::Pmech(pm) => pm,
                    _ => unreachable!(),
                },
                _ => bench.init_info[idx].p_m0,
            };
            let (i_d, i_q) = crate::models::stator_currents_of(&sync.machine, bus.v, params);
            let (_, out) =
                genrou_derivatives_at_current(&sync.machine, e_fd, p_mech, i_d, i_q, params);
            let gate = match &sync.governor {
                Some(ControllerState::Hygov { gate, .. }) => Some(*gate),
                _ => None,
            };
            truth
                .sync
                .get_mut(&unit.id)
                .expect("sync record vec exists")
                .push(SyncRecord { state: sync.machine, e_fd, p_mech, out, gate });
        }
    }
    Ok(())
}
