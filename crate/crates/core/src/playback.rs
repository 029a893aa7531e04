//! Event playback and source ranking: every unit is re-simulated under a
//! normal-operation hypothesis driven by the measured bus voltage, the
//! unobserved per-generator injections are reconstructed from the one
//! measured branch current, and the generator hypotheses are ranked by the
//! energy of their estimation residuals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::ResidualRecord;
use crate::models::{
    genrou_derivatives_at_current, ControllerOutputs, ControllerParams, GovernorInput,
    RenewableParams,
};
use crate::pmuio::PhasorTrace;
use crate::simulate::{BenchState, TestBench, UnitKind, UnitState};
use crate::Phasor;

#[derive(Debug, Error)]
pub enum PlaybackError {
    #[error("playback diverged in unit '{unit}' at t = {t:.3} s")]
    Diverged { unit: String, t: f64 },
    #[error("measurement trace has marked gaps; repair or trim before playback")]
    Gaps,
    #[error("timeline misalignment: {0}")]
    Misaligned(String),
    #[error("{0}")]
    Trace(#[from] crate::pmuio::PmuError),
}

/// Per-unit current injections simulated under the normal-operation models,
/// on the measurement timeline, system base.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlaybackResult {
    pub dt: f64,
    pub t0: f64,
    pub unit_ids: Vec<String>,
    pub currents: Vec<Vec<Phasor>>,
    /// field voltage and mechanical power each synchronous unit's
    /// controllers produced during playback (diagnostics)
    pub e_fd: Vec<Vec<f64>>,
    pub p_mech: Vec<Vec<f64>>,
}

impl PlaybackResult {
    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.unit_ids.iter().position(|u| u == id)
    }
}

/// Forward-simulate every unit with its full controller models, terminal
/// voltage forced to the measured trace (linearly interpolated inside each
/// step), no process noise, no unknown inputs.
pub fn event_playback(
    bench: &TestBench,
    trace: &PhasorTrace,
    init: &BenchState,
) -> Result<PlaybackResult, PlaybackError> {
    trace.validate()?;
    if !trace.meta.gaps.is_empty() {
        return Err(PlaybackError::Gaps);
    }
    let n = trace.len();
    let dt = trace.dt;
    let mut result = PlaybackResult {
        dt,
        t0: trace.t0,
        unit_ids: bench.units.iter().map(|u| u.id.clone()).collect(),
        currents: vec![Vec::with_capacity(n); bench.units.len()],
        e_fd: vec![Vec::new(); bench.units.len()],
        p_mech: vec![Vec::new(); bench.units.len()],
    };

    for (idx, (unit, ustate)) in bench.units.iter().zip(init.iter()).enumerate() {
        match (&unit.kind, ustate) {
            (UnitKind::Sync { params, exciter, governor }, UnitState::Sync(s0)) => {
                let k_base = unit.base_ratio(bench.s_base);
                let mut machine = s0.machine;
                let mut exc = s0.exciter.clone();
                let mut gov = s0.governor.clone();

                let outputs = |machine: &crate::models::MachineState,
                               exc: &Option<crate::models::ControllerState>,
                               gov: &Option<crate::models::ControllerState>,
                               v: Phasor| {
                    let input =
                        GovernorInput { v_mag: v.norm(), omega: machine.omega, p_e: 0.0 };
                    let e_fd = match (exc, exciter) {
                        (Some(st), Some(ps)) => match ps.output(st, &input) {
                            ControllerOutputs::Efd(e) => e,
                            _ => unreachable!(),
                        },
                        _ => bench.init_info[idx].e_fd0,
                    };
                    let p_mech = match (gov, governor) {
                        (Some(st), Some(ps)) => match ps.output(st, &input) {
                            ControllerOutputs::Pmech(pm) => pm,
                            _ => unreachable!(),
                        },
                        _ => bench.init_info[idx].p_m0,
                    };
                    (e_fd, p_mech)
                };

                for k in 0..n {
                    let v = trace.v[k];
                    let (i_d, i_q) = crate::models::stator_currents_of(&machine, v, params);
                    let (i_re, i_im) = crate::models::dq_to_network(i_d, i_q, machine.delta);
                    result.currents[idx].push(Phasor::new(i_re, i_im) * k_base);
                    let (e_fd, p_mech) = outputs(&machine, &exc, &gov, v);
                    result.e_fd[idx].push(e_fd);
                    result.p_mech[idx].push(p_mech);

                    if k + 1 == n {
                        break;
                    }
                    let v_next = trace.v[k + 1];
                    let v_at = |frac: f64| v * (1.0 - frac) + v_next * frac;

                    // joint RK4 over machine + controllers with V(t) forced
                    let len_e = exc.as_ref().map_or(0, |e| ControllerParams::state_to_vec(e).len());
                    let len_g = gov.as_ref().map_or(0, |g| ControllerParams::state_to_vec(g).len());
                    let pack = |m: &crate::models::MachineState,
                                e: &Option<crate::models::ControllerState>,
                                g: &Option<crate::models::ControllerState>| {
                        let mut v: Vec<f64> = m.to_array().to_vec();
                        if let Some(e) = e {
                            v.extend(ControllerParams::state_to_vec(e));
                        }
                        if let Some(g) = g {
                            v.extend(ControllerParams::state_to_vec(g));
                        }
                        v
                    };
                    let unpack = |v: &[f64]| {
                        let m = crate::models::MachineState::from_array(&v[..6]);
                        let e = match (&exc, exciter) {
                            (Some(ts), Some(ps)) => Some(ps.state_from_vec(ts, &v[6..6 + len_e])),
                            _ => None,
                        };
                        let g = match (&gov, governor) {
                            (Some(ts), Some(ps)) => {
                                Some(ps.state_from_vec(ts, &v[6 + len_e..6 + len_e + len_g]))
                            }
                            _ => None,
                        };
                        (m, e, g)
                    };
                    let deriv = |v: &[f64], frac: f64| {
                        let (m, e, g) = unpack(v);
                        let vt = v_at(frac);
                        let (i_d, i_q) = crate::models::stator_currents_of(&m, vt, params);
                        let (e_fd, p_mech) = outputs(&m, &e, &g, vt);
                        let (md, out) =
                            genrou_derivatives_at_current(&m, e_fd, p_mech, i_d, i_q, params);
                        let mut d: Vec<f64> = md.to_vec();
                        let input =
                            GovernorInput { v_mag: vt.norm(), omega: m.omega, p_e: out.p_e };
                        if let (Some(st), Some(ps)) = (&e, exciter) {
                            d.extend(ps.derivatives(st, &input));
                        }
                        if let (Some(st), Some(ps)) = (&g, governor) {
                            d.extend(ps.derivatives(st, &input));
                        }
                        d
                    };

                    let x0 = pack(&machine, &exc, &gov);
                    let k1 = deriv(&x0, 0.0);
                    let k2 = deriv(&step_vec(&x0, &k1, dt / 2.0), 0.5);
                    let k3 = deriv(&step_vec(&x0, &k2, dt / 2.0), 0.5);
                    let k4 = deriv(&step_vec(&x0, &k3, dt), 1.0);
                    let mut x1 = x0;
                    for i in 0..x1.len() {
                        x1[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    }
                    let (m1, e1, g1) = unpack(&x1);
                    if !m1.is_finite() || m1.omega.abs() >= 0.2 {
                        return Err(PlaybackError::Diverged {
                            unit: unit.id.clone(),
                            t: trace.time(k + 1),
                        });
                    }
                    machine = m1;
                    exc = e1;
                    gov = g1;
                }
            }
            (UnitKind::Renew { params, p_pu, q_pu }, UnitState::Renew(r0)) => {
                let k_base = unit.base_ratio(bench.s_base);
                let mut cur = *r0;
                for k in 0..n {
                    result.currents[idx].push(cur.i * k_base);
                    if k + 1 == n {
                        break;
                    }
                    let v = trace.v[k];
                    let v_next = trace.v[k + 1];
                    cur = rk4_renewable(params, &cur, *p_pu, *q_pu, v, v_next, dt);
                }
            }
            _ => unreachable!("bench state shape mismatch"),
        }
    }
    Ok(result)
}

fn step_vec(x: &[f64], k: &[f64], h: f64) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn rk4_renewable(
    params: &RenewableParams,
    state: &crate::models::RenewableState,
    p: f64,
    q: f64,
    v0: Phasor,
    v1: Phasor,
    dt: f64,
) -> crate::models::RenewableState {
    let f = |i: Phasor, frac: f64| {
        let v = v0 * (1.0 - frac) + v1 * frac;
        params.derivative(&crate::models::RenewableState { i }, p, q, v)
    };
    let k1 = f(state.i, 0.0);
    let k2 = f(state.i + k1 * (dt / 2.0), 0.5);
    let k3 = f(state.i + k2 * (dt / 2.0), 0.5);
    let k4 = f(state.i + k3 * dt, 1.0);
    crate::models::RenewableState { i: state.i + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0) }
}

/// Reconstruct unit `j`'s injection from the measured branch current and the
/// other units' playback currents: `I_j = I_T - sum_{i != j} I_i`.
pub fn current_injection(
    j: usize,
    i_measured: &[Phasor],
    playback: &PlaybackResult,
) -> Result<Vec<Phasor>, PlaybackError> {
    for (i, series) in playback.currents.iter().enumerate() {
        if series.len() != i_measured.len() {
            return Err(PlaybackError::Misaligned(format!(
                "playback unit {} has {} samples, measured branch {}",
                i,
                series.len(),
                i_measured.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(i_measured.len());
    for k in 0..i_measured.len() {
        let mut i_j = i_measured[k];
        for (i, series) in playback.currents.iter().enumerate() {
            if i != j {
                i_j -= series[k];
            }
        }
        out.push(i_j);
    }
    Ok(out)
}

/// Sliding-window residual energy: at step `k`, the sum of squared `y_max`
/// samples over the trailing `window + 1` samples (fewer while the window is
/// filling).
pub fn residual_energy(record: &ResidualRecord, window: usize) -> Result<Vec<f64>, PlaybackError> {
    if window < 1 {
        return Err(PlaybackError::Misaligned("window must be >= 1 step".into()));
    }
    if window >= record.len() {
        return Err(PlaybackError::Misaligned(format!(
            "window of {} steps exceeds the {}-sample record",
            window,
            record.len()
        )));
    }
    let sq: Vec<f64> = record.y_max.iter().map(|y| y * y).collect();
    let mut out = Vec::with_capacity(sq.len());
    let mut acc = 0.0;
    for k in 0..sq.len() {
        acc += sq[k];
        if k > window {
            acc -= sq[k - window - 1];
        }
        out.push(acc);
    }
    Ok(out)
}

/// Cumulative residual energy from the start of the record.
pub fn residual_energy_cumulative(record: &ResidualRecord) -> Vec<f64> {
    let mut acc = 0.0;
    record
        .y_max
        .iter()
        .map(|y| {
            acc += y * y;
            acc
        })
        .collect()
}

/// Outcome of the residual-energy ranking across generator hypotheses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankingReport {
    pub unit_ids: Vec<String>,
    /// full sliding-window energy series per hypothesis
    pub energies: Vec<Vec<f64>>,
    /// final-window energy per hypothesis
    pub final_energies: Vec<f64>,
    pub identified: String,
    /// second-lowest over lowest final energy
    pub margin: f64,
    pub warnings: Vec<String>,
}

/// The source is the hypothesis with the smallest final-window residual
/// energy; exact ties break to the lowest unit index with a warning.
pub fn identify_source(
    hypotheses: &[(String, Vec<f64>)],
) -> Result<RankingReport, PlaybackError> {
    if hypotheses.len() < 2 {
        return Err(PlaybackError::Misaligned(format!(
            "need at least 2 hypotheses, got {}",
            hypotheses.len()
        )));
    }
    let finals: Vec<f64> = hypotheses
        .iter()
        .map(|(_, e)| e.last().copied().unwrap_or(f64::INFINITY))
        .collect();
    let mut best = 0;
    for (i, f) in finals.iter().enumerate().skip(1) {
        if *f < finals[best] {
            best = i;
        }
    }
    let mut warnings = Vec::new();
    if finals.iter().enumerate().any(|(i, f)| i != best && *f == finals[best]) {
        warnings.push(format!(
            "exact residual-energy tie; deterministically keeping '{}'",
            hypotheses[best].0
        ));
    }
    let mut second = f64::INFINITY;
    for (i, f) in finals.iter().enumerate() {
        if i != best && *f < second {
            second = *f;
        }
    }
    let margin = if finals[best] > 0.0 { second / finals[best] } else { f64::INFINITY };
    if margin < 1.5 {
        warnings.push(format!(
            "low ranking margin {margin:.3}; the runner-up hypothesis is nearly as consistent"
        ));
    }
    Ok(RankingReport {
        unit_ids: hypotheses.iter().map(|(id, _)| id.clone()).collect(),
        energies: hypotheses.iter().map(|(_, e)| e.clone()).collect(),
        final_energies: finals,
        identified: hypotheses[best].0.clone(),
        margin,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(y_max: Vec<f64>) -> ResidualRecord {
        let y = y_max.iter().map(|v| vec![*v, 0.0]).collect();
        ResidualRecord::from_innovations(1e-3, 0.0, y)
    }

    #[test]
    fn residual_energy_closed_forms() {
        let zero = record(vec![0.0; 100]);
        let e = residual_energy(&zero, 10).unwrap();
        assert!(e.iter().all(|v| *v == 0.0));

        let c = 0.7;
        let constant = record(vec![c; 100]);
        let e = residual_energy(&constant, 10).unwrap();
        // filled window holds L + 1 samples
        assert!((e[99] - 11.0 * c * c).abs() < 1e-12);
        assert!((e[0] - c * c).abs() < 1e-15);

        assert!(residual_energy(&constant, 100).is_err());
    }

    #[test]
    fn cumulative_energy_is_monotone_and_dominates_windows() {
        let r = record((0..200).map(|k| (0.1 * k as f64).sin()).collect());
        let cum = residual_energy_cumulative(&r);
        for w in cum.windows(2) {
            assert!(w[1] >= w[0]);
        }
        let slid = residual_energy(&r, 20).unwrap();
        for (c, s) in cum.iter().zip(&slid) {
            assert!(s <= c, "a window sum cannot exceed the cumulative sum");
        }
    }

    #[test]
    fn argmin_and_margin() {
        let h = vec![
            ("H".to_string(), vec![1.0]),
            ("G".to_string(), vec![5.0]),
            ("B".to_string(), vec![7.0]),
        ];
        let r = identify_source(&h).unwrap();
        assert_eq!(r.identified, "H");
        assert!((r.margin - 5.0).abs() < 1e-12);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn ties_break_deterministically_with_warning() {
        let h = vec![
            ("B".to_string(), vec![2.0]),
            ("G".to_string(), vec![2.0]),
            ("H".to_string(), vec![9.0]),
        ];
        let r = identify_source(&h).unwrap();
        assert_eq!(r.identified, "B");
        assert!(!r.warnings.is_empty());
        assert!(identify_source(&h[..1]).is_err());
    }

    #[test]
    fn ranking_is_scale_invariant() {
        let base = vec![
            ("B".to_string(), vec![4.0, 6.0]),
            ("G".to_string(), vec![1.0, 2.0]),
            ("H".to_string(), vec![9.0, 8.0]),
        ];
        let scaled: Vec<(String, Vec<f64>)> = base
            .iter()
            .map(|(id, e)| (id.clone(), e.iter().map(|v| v * 37.5).collect()))
            .collect();
        let a = identify_source(&base).unwrap();
        let b = identify_source(&scaled).unwrap();
        assert_eq!(a.identified, b.identified);
        assert!((a.margin - b.margin).abs() < 1e-12);
    }

    #[test]
    fn injection_reconstruction_arithmetic() {
        let playback = PlaybackResult {
            dt: 1e-3,
            t0: 0.0,
            unit_ids: vec!["A".into(), "B".into(), "C".into(), "D".into(), "E".into()],
            currents: vec![vec![Phasor::new(1.0, 0.0); 4]; 5],
            e_fd: vec![],
            p_mech: vec![],
        };
        let i_t = vec![Phasor::new(5.0, 0.0); 4];
        let i_j = current_injection(2, &i_t, &playback).unwrap();
        for v in i_j {
            assert!((v - Phasor::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn eq15_consistency_identity() {
        // sum_j I_j(recon) == T I_T - (T - 1) sum_i I_i(playback), exactly
        let t_units = 5;
        let n = 16;
        // dyadic rationals (k / 1024) make every sum and difference exact
        // in f64, so the identity can be asserted bit-for-bit
        let mk = |seed: u64| -> Vec<Phasor> {
            let mut s = seed;
            let mut dyadic = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 40) as i64 - (1 << 23)) as f64 / 1024.0
            };
            (0..n).map(|_| Phasor::new(dyadic(), dyadic())).collect()
        };
        let playback = PlaybackResult {
            dt: 1e-3,
            t0: 0.0,
            unit_ids: (0..t_units).map(|i| format!("U{i}")).collect(),
            currents: (0..t_units).map(|i| mk(i as u64 + 1)).collect(),
            e_fd: vec![],
            p_mech: vec![],
        };
        let i_t = mk(99);
        let mut sum_recon = vec![Phasor::new(0.0, 0.0); n];
        for j in 0..t_units {
            for (k, v) in current_injection(j, &i_t, &playback).unwrap().iter().enumerate() {
                sum_recon[k] += v;
            }
        }
        for k in 0..n {
            let mut sum_play = Phasor::new(0.0, 0.0);
            for series in &playback.currents {
                sum_play += series[k];
            }
            let rhs = i_t[k] * t_units as f64 - sum_play * (t_units as f64 - 1.0);
            assert_eq!(sum_recon[k], rhs, "identity must hold exactly at sample {k}");
        }
    }
}
