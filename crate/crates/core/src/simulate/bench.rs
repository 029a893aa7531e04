use serde::{Deserialize, Serialize};

use super::SimError;
use crate::models::{
    init_from_powerflow, BenchSpec, ControllerParams, ControllerState, GenrouParams, MachineState,
    RenewableParams, RenewableState, UnitSpec,
};
use crate::Phasor;

#[derive(Debug, Clone)]
pub enum UnitKind {
    Sync {
        params: GenrouParams,
        exciter: Option<ControllerParams>,
        governor: Option<ControllerParams>,
    },
    Renew {
        params: RenewableParams,
        /// dispatch on the machine base
        p_pu: f64,
        q_pu: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Unit {
    pub id: String,
    pub kind: UnitKind,
}

impl Unit {
    pub fn is_synchronous(&self) -> bool {
        matches!(self.kind, UnitKind::Sync { .. })
    }

    pub fn mva_base(&self) -> f64 {
        match &self.kind {
            UnitKind::Sync { params, .. } => params.mva_base,
            UnitKind::Renew { params, .. } => params.mva_base,
        }
    }

    /// machine-base current to system-base current
    pub fn base_ratio(&self, s_base: f64) -> f64 {
        self.mva_base() / s_base
    }
}

/// Equilibrium summary per unit, kept around as injection anchors and as the
/// fallback for units without controllers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UnitInit {
    pub e_fd0: f64,
    pub p_m0: f64,
    pub gate0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncState {
    pub machine: MachineState,
    pub exciter: Option<ControllerState>,
    pub governor: Option<ControllerState>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnitState {
    Sync(SyncState),
    Renew(RenewableState),
}

pub type BenchState = Vec<UnitState>;

/// The single-bus test bench: all units at one bus, one line to an infinite
/// bus whose phasor is derived so the scheduled bus voltage is an exact
/// equilibrium of the dispatched system.
#[derive(Debug, Clone)]
pub struct TestBench {
    pub s_base: f64,
    pub freq_hz: f64,
    pub line: Phasor,
    pub v_inf: Phasor,
    pub ts: f64,
    pub bus: String,
    pub remote_bus: String,
    pub units: Vec<Unit>,
    pub init_info: Vec<UnitInit>,
    initial: BenchState,
    /// flat state-vector offset of each unit
    offsets: Vec<usize>,
    dim: usize,
}

impl TestBench {
    /// Initialize every unit at the scheduled bus voltage and back out the
    /// infinite-bus phasor from the total injection.
    pub fn build(spec: &BenchSpec) -> Result<Self, SimError> {
        spec.validate().map_err(|e| SimError::BadInjection(e.to_string()))?;
        let v_sched = Phasor::new(spec.system.v_bus, 0.0);
        let mut units = Vec::new();
        let mut init_info = Vec::new();
        let mut initial = Vec::new();
        let mut total_i = Phasor::new(0.0, 0.0);

        for u in &spec.units {
            match u {
                UnitSpec::Genrou { id, p_mw, q_mvar, params, exciter, governor } => {
                    let init = init_from_powerflow(
                        *p_mw,
                        *q_mvar,
                        v_sched,
                        params,
                        exciter.as_ref(),
                        governor.as_ref(),
                    )?;
                    let gate0 = match &init.governor {
                        Some(ControllerState::Hygov { gate, .. }) => *gate,
                        _ => 0.0,
                    };
                    total_i += Phasor::new(init.outputs.i_re, init.outputs.i_im)
                        * (params.mva_base / spec.system.mva_base);
                    init_info.push(UnitInit { e_fd0: init.e_fd0, p_m0: init.p_m0, gate0 });
                    initial.push(UnitState::Sync(SyncState {
                        machine: init.machine,
                        exciter: init.exciter,
                        governor: init.governor,
                    }));
                    units.push(Unit {
                        id: id.clone(),
                        kind: UnitKind::Sync {
                            params: params.clone(),
                            exciter: exciter.clone(),
                            governor: governor.clone(),
                        },
                    });
                }
                UnitSpec::Renew { id, p_mw, q_mvar, mva_base, t_lag } => {
                    let params = RenewableParams { t_lag: *t_lag, mva_base: *mva_base };
                    let (p_pu, q_pu) = (p_mw / mva_base, q_mvar / mva_base);
                    let state = params.init(p_pu, q_pu, v_sched);
                    total_i += state.i * (mva_base / spec.system.mva_base);
                    init_info.push(UnitInit { e_fd0: 0.0, p_m0: 0.0, gate0: 0.0 });
                    initial.push(UnitState::Renew(state));
                    units.push(Unit { id: id.clone(), kind: UnitKind::Renew { params, p_pu, q_pu } });
                }
            }
        }

        let line = Phasor::new(spec.system.line_r, spec.system.line_x);
        let v_inf = v_sched - line * total_i;

        let mut offsets = Vec::with_capacity(units.len());
        let mut dim = 0;
        for st in &initial {
            offsets.push(dim);
            dim += unit_state_len(st);
        }

        Ok(Self {
            s_base: spec.system.mva_base,
            freq_hz: spec.system.freq_hz,
            line,
            v_inf,
            ts: spec.system.ts,
            bus: spec.system.bus.clone(),
            remote_bus: spec.system.remote_bus.clone(),
            units,
            init_info,
            initial,
            offsets,
            dim,
        })
    }

    pub fn initial_state(&self) -> BenchState {
        self.initial.clone()
    }

    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.units.iter().position(|u| u.id == id)
    }

    pub fn unit_offset(&self, idx: usize) -> usize {
        self.offsets[idx]
    }

    pub fn state_dim(&self) -> usize {
        self.dim
    }

    pub fn state_to_vec(&self, state: &BenchState) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim);
        for st in state {
            match st {
                UnitState::Sync(s) => {
                    v.extend_from_slice(&s.machine.to_array());
                    if let Some(e) = &s.exciter {
                        v.extend(ControllerParams::state_to_vec(e));
                    }
                    if let Some(g) = &s.governor {
                        v.extend(ControllerParams::state_to_vec(g));
                    }
                }
                UnitState::Renew(r) => {
                    v.push(r.i.re);
                    v.push(r.i.im);
                }
            }
        }
        v
    }

    /// Rebuild the typed state; limited controller integrators are clamped
    /// back into range on the way.
    pub fn state_from_vec(&self, v: &[f64]) -> BenchState {
        let mut out = Vec::with_capacity(self.units.len());
        let mut pos = 0;
        for (unit, template) in self.units.iter().zip(self.initial.iter()) {
            match (&unit.kind, template) {
                (UnitKind::Sync { exciter, governor, .. }, UnitState::Sync(t)) => {
                    let machine = MachineState::from_array(&v[pos..pos + MachineState::DIM]);
                    pos += MachineState::DIM;
                    let exciter_state = match (exciter, &t.exciter) {
                        (Some(ps), Some(ts)) => {
                            let n = ControllerParams::state_to_vec(ts).len();
                            let s = ps.state_from_vec(ts, &v[pos..pos + n]);
                            pos += n;
                            Some(s)
                        }
                        _ => None,
                    };
                    let governor_state = match (governor, &t.governor) {
                        (Some(ps), Some(ts)) => {
                            let n = ControllerParams::state_to_vec(ts).len();
                            let s = ps.state_from_vec(ts, &v[pos..pos + n]);
                            pos += n;
                            Some(s)
                        }
                        _ => None,
                    };
                    out.push(UnitState::Sync(SyncState {
                        machine,
                        exciter: exciter_state,
                        governor: governor_state,
                    }));
                }
                (UnitKind::Renew { .. }, UnitState::Renew(_)) => {
                    out.push(UnitState::Renew(RenewableState {
                        i: Phasor::new(v[pos], v[pos + 1]),
                    }));
                    pos += 2;
                }
                _ => unreachable!(),
            }
        }
        debug_assert_eq!(pos, self.dim);
        out
    }
}

fn unit_state_len(st: &UnitState) -> usize {
    match st {
        UnitState::Sync(s) => {
            MachineState::DIM
                + s.exciter.as_ref().map_or(0, |e| ControllerParams::state_to_vec(e).len())
                + s.governor.as_ref().map_or(0, |g| ControllerParams::state_to_vec(g).len())
        }
        UnitState::Renew(_) => 2,
    }
}
