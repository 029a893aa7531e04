use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("non-finite controller input: {0}")]
    NonFinite(&'static str),
    #[error("controller setpoint infeasible: {0}")]
    Infeasible(String),
}

/// Simplified excitation system: lead-lag `(1 + s Ta)/(1 + s Tb)` followed by
/// `K/(1 + s Te)` with non-windup field-voltage limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SexsParams {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "TA_over_TB")]
    pub ta_over_tb: f64,
    #[serde(rename = "TB")]
    pub tb: f64,
    #[serde(rename = "TE")]
    pub te: f64,
    #[serde(rename = "Emin")]
    pub e_min: f64,
    #[serde(rename = "Emax")]
    pub e_max: f64,
}

impl Default for SexsParams {
    fn default() -> Self {
        Self { k: 100.0, ta_over_tb: 0.1, tb: 10.0, te: 0.05, e_min: 0.0, e_max: 5.0 }
    }
}

/// Steam turbine-governor: droop, a limited valve lag `1/(1 + s T1)` and the
/// reheat lead-lag `(1 + s T2)/(1 + s T3)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Tgov1Params {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    #[serde(rename = "T2")]
    pub t2: f64,
    #[serde(rename = "T3")]
    pub t3: f64,
    #[serde(rename = "Dt")]
    pub d_t: f64,
    #[serde(rename = "Vmin")]
    pub v_min: f64,
    #[serde(rename = "Vmax")]
    pub v_max: f64,
}

impl Default for Tgov1Params {
    fn default() -> Self {
        Self { r: 0.05, t1: 0.5, t2: 2.1, t3: 7.0, d_t: 0.0, v_min: 0.0, v_max: 1.0 }
    }
}

/// Gas turbine-governor with droop, fuel-valve and fuel-system lags and the
/// exhaust-temperature limit path.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GastParams {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    #[serde(rename = "T2")]
    pub t2: f64,
    #[serde(rename = "T3")]
    pub t3: f64,
    #[serde(rename = "AT")]
    pub load_limit: f64,
    #[serde(rename = "KT")]
    pub k_t: f64,
    #[serde(rename = "Dturb")]
    pub d_turb: f64,
    #[serde(rename = "Vmin")]
    pub v_min: f64,
    #[serde(rename = "Vmax")]
    pub v_max: f64,
}

impl Default for GastParams {
    fn default() -> Self {
        Self {
            r: 0.05,
            t1: 0.4,
            t2: 0.1,
            t3: 3.0,
            load_limit: 1.0,
            k_t: 2.0,
            d_turb: 0.0,
            v_min: 0.0,
            v_max: 1.0,
        }
    }
}

/// Hydro turbine-governor: temporary/permanent droop, gate servo with
/// velocity and position limits, and the penstock water column.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HygovParams {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "r")]
    pub r_temp: f64,
    #[serde(rename = "Tr")]
    pub t_r: f64,
    #[serde(rename = "Tf")]
    pub t_f: f64,
    #[serde(rename = "Tg")]
    pub t_g: f64,
    #[serde(rename = "VELM")]
    pub velm: f64,
    #[serde(rename = "Gmin")]
    pub g_min: f64,
    #[serde(rename = "Gmax")]
    pub g_max: f64,
    #[serde(rename = "Tw")]
    pub t_w: f64,
    #[serde(rename = "At")]
    pub a_t: f64,
    #[serde(rename = "Dturb")]
    pub d_turb: f64,
    #[serde(rename = "qNL")]
    pub q_nl: f64,
}

impl Default for HygovParams {
    fn default() -> Self {
        Self {
            r: 0.05,
            r_temp: 0.3,
            t_r: 5.0,
            t_f: 0.05,
            t_g: 0.5,
            velm: 0.2,
            g_min: 0.0,
            g_max: 1.0,
            t_w: 1.0,
            a_t: 1.0,
            d_turb: 0.0,
            q_nl: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ControllerParams {
    #[serde(rename = "SEXS")]
    Sexs(SexsParams),
    #[serde(rename = "TGOV1")]
    Tgov1(Tgov1Params),
    #[serde(rename = "GAST")]
    Gast(GastParams),
    #[serde(rename = "HYGOV")]
    Hygov(HygovParams),
}

/// Internal states plus the references fixed at initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControllerState {
    Sexs {
        /// lead-lag internal state
        x_ll: f64,
        e_fd: f64,
        v_ref: f64,
    },
    Tgov1 {
        valve: f64,
        x_ll: f64,
        p_ref: f64,
    },
    Gast {
        fuel_valve: f64,
        fuel_flow: f64,
        exhaust_temp: f64,
        p_ref: f64,
    },
    Hygov {
        filter: f64,
        desired_gate: f64,
        gate: f64,
        flow: f64,
        n_ref: f64,
    },
}

/// Bus-side signals a controller reacts to.
#[derive(Debug, Clone, Copy)]
pub struct GovernorInput {
    pub v_mag: f64,
    pub omega: f64,
    pub p_e: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum ControllerOutputs {
    Efd(f64),
    Pmech(f64),
}

impl ControllerParams {
    /// Steady state holding `e_fd0`/`p_m0` at terminal magnitude `v0`.
    pub fn init(&self, v0: f64, e_fd0: f64, p_m0: f64) -> Result<ControllerState, ControllerError> {
        match self {
            ControllerParams::Sexs(p) => {
                if e_fd0 < p.e_min || e_fd0 > p.e_max {
                    return Err(ControllerError::Infeasible(format!(
                        "required Efd0 {} outside [{}, {}]",
                        e_fd0, p.e_min, p.e_max
                    )));
                }
                let v_err = e_fd0 / p.k;
                Ok(ControllerState::Sexs { x_ll: v_err, e_fd: e_fd0, v_ref: v0 + v_err })
            }
            ControllerParams::Tgov1(p) => {
                if p_m0 < p.v_min || p_m0 > p.v_max {
                    return Err(ControllerError::Infeasible(format!(
                        "required Pm0 {} outside valve limits [{}, {}]",
                        p_m0, p.v_min, p.v_max
                    )));
                }
                Ok(ControllerState::Tgov1 { valve: p_m0, x_ll: p_m0, p_ref: p_m0 })
            }
            ControllerParams::Gast(p) => {
                if p_m0 < p.v_min || p_m0 > p.v_max || p_m0 > p.load_limit {
                    return Err(ControllerError::Infeasible(format!(
                        "required Pm0 {} outside GAST limits",
                        p_m0
                    )));
                }
                Ok(ControllerState::Gast {
                    fuel_valve: p_m0,
                    fuel_flow: p_m0,
                    exhaust_temp: p_m0,
                    p_ref: p_m0,
                })
            }
            ControllerParams::Hygov(p) => {
                let gate = p_m0 / p.a_t + p.q_nl;
                if gate < p.g_min || gate > p.g_max {
                    return Err(ControllerError::Infeasible(format!(
                        "required gate {} outside [{}, {}]",
                        gate, p.g_min, p.g_max
                    )));
                }
                Ok(ControllerState::Hygov {
                    filter: 0.0,
                    desired_gate: gate,
                    gate,
                    flow: gate,
                    n_ref: p.r * gate,
                })
            }
        }
    }

    /// Time derivatives of the controller states for the given inputs.
    /// Non-windup limits pin the corresponding derivative at the limit.
    pub fn derivatives(&self, state: &ControllerState, input: &GovernorInput) -> Vec<f64> {
        match (self, state) {
            (ControllerParams::Sexs(p), ControllerState::Sexs { x_ll, e_fd, v_ref }) => {
                let v_err = v_ref - input.v_mag;
                let d_xll = (v_err - x_ll) / p.tb;
                let y_ll = p.ta_over_tb * v_err + (1.0 - p.ta_over_tb) * x_ll;
                let mut d_efd = (p.k * y_ll - e_fd) / p.te;
                if (*e_fd >= p.e_max && d_efd > 0.0) || (*e_fd <= p.e_min && d_efd < 0.0) {
                    d_efd = 0.0;
                }
                vec![d_xll, d_efd]
            }
            (ControllerParams::Tgov1(p), ControllerState::Tgov1 { valve, x_ll, p_ref }) => {
                let cmd = p_ref - input.omega / p.r;
                let mut d_valve = (cmd - valve) / p.t1;
                if (*valve >= p.v_max && d_valve > 0.0) || (*valve <= p.v_min && d_valve < 0.0) {
                    d_valve = 0.0;
                }
                let d_xll = (valve - x_ll) / p.t3;
                vec![d_valve, d_xll]
            }
            (
                ControllerParams::Gast(p),
                ControllerState::Gast { fuel_valve, fuel_flow, exhaust_temp, p_ref },
            ) => {
                let droop_cmd = p_ref - input.omega / p.r;
                let temp_cmd = p.load_limit + p.k_t * (p.load_limit - exhaust_temp);
                let cmd = droop_cmd.min(temp_cmd).clamp(p.v_min, p.v_max);
                let mut d_fv = (cmd - fuel_valve) / p.t1;
                if (*fuel_valve >= p.v_max && d_fv > 0.0) || (*fuel_valve <= p.v_min && d_fv < 0.0) {
                    d_fv = 0.0;
                }
                let d_ff = (fuel_valve - fuel_flow) / p.t2;
                let d_et = (fuel_flow - exhaust_temp) / p.t3;
                vec![d_fv, d_ff, d_et]
            }
            (
                ControllerParams::Hygov(p),
                ControllerState::Hygov { filter, desired_gate, gate, flow, n_ref },
            ) => {
                let err = n_ref - input.omega - p.r * desired_gate;
                let d_filter = (err - filter) / p.t_f;
                // temporary-droop PI: c = z + e_f/r_temp with z' = e_f/(r_temp Tr);
                // desired_gate stores c, so c' = z' + e_f'/r_temp
                let d_c = filter / (p.r_temp * p.t_r) + d_filter / p.r_temp;
                let mut d_gate = ((desired_gate - gate) / p.t_g).clamp(-p.velm, p.velm);
                if (*gate >= p.g_max && d_gate > 0.0) || (*gate <= p.g_min && d_gate < 0.0) {
                    d_gate = 0.0;
                }
                let head = if *gate > 1e-6 { (flow / gate) * (flow / gate) } else { 0.0 };
                let d_flow = (1.0 - head) / p.t_w;
                vec![d_filter, d_c, d_gate, d_flow]
            }
            _ => unreachable!("controller state does not match its parameters"),
        }
    }

    /// Output with limits applied. For HYGOV the turbine power is computed
    /// from the flow and (possibly overridden) gate.
    pub fn output(&self, state: &ControllerState, input: &GovernorInput) -> ControllerOutputs {
        match (self, state) {
            (ControllerParams::Sexs(p), ControllerState::Sexs { e_fd, .. }) => {
                ControllerOutputs::Efd(e_fd.clamp(p.e_min, p.e_max))
            }
            (ControllerParams::Tgov1(p), ControllerState::Tgov1 { valve, x_ll, .. }) => {
                let y = p.t2 / p.t3 * valve + (1.0 - p.t2 / p.t3) * x_ll;
                ControllerOutputs::Pmech(y - p.d_t * input.omega)
            }
            (ControllerParams::Gast(p), ControllerState::Gast { fuel_flow, .. }) => {
                ControllerOutputs::Pmech(fuel_flow - p.d_turb * input.omega)
            }
            (ControllerParams::Hygov(p), ControllerState::Hygov { gate, flow, .. }) => {
                let head = if *gate > 1e-6 { (flow / gate) * (flow / gate) } else { 0.0 };
                ControllerOutputs::Pmech(p.a_t * head * (flow - p.q_nl) - p.d_turb * input.omega * gate)
            }
            _ => unreachable!("controller state does not match its parameters"),
        }
    }

    pub fn state_to_vec(state: &ControllerState) -> Vec<f64> {
        match state {
            ControllerState::Sexs { x_ll, e_fd, .. } => vec![*x_ll, *e_fd],
            ControllerState::Tgov1 { valve, x_ll, .. } => vec![*valve, *x_ll],
            ControllerState::Gast { fuel_valve, fuel_flow, exhaust_temp, .. } => {
                vec![*fuel_valve, *fuel_flow, *exhaust_temp]
            }
            ControllerState::Hygov { filter, desired_gate, gate, flow, .. } => {
                vec![*filter, *desired_gate, *gate, *flow]
            }
        }
    }

    /// Rebuild the state from a vector, clamping limited integrators back
    /// into their non-windup range.
    pub fn state_from_vec(&self, template: &ControllerState, v: &[f64]) -> ControllerState {
        match (self, template) {
            (ControllerParams::Sexs(p), ControllerState::Sexs { v_ref, .. }) => ControllerState::Sexs {
                x_ll: v[0],
                e_fd: v[1].clamp(p.e_min, p.e_max),
                v_ref: *v_ref,
            },
            (ControllerParams::Tgov1(p), ControllerState::Tgov1 { p_ref, .. }) => {
                ControllerState::Tgov1 { valve: v[0].clamp(p.v_min, p.v_max), x_ll: v[1], p_ref: *p_ref }
            }
            (ControllerParams::Gast(p), ControllerState::Gast { p_ref, .. }) => ControllerState::Gast {
                fuel_valve: v[0].clamp(p.v_min, p.v_max),
                fuel_flow: v[1],
                exhaust_temp: v[2],
                p_ref: *p_ref,
            },
            (ControllerParams::Hygov(p), ControllerState::Hygov { n_ref, .. }) => ControllerState::Hygov {
                filter: v[0],
                desired_gate: v[1],
                gate: v[2].clamp(p.g_min, p.g_max),
                flow: v[3],
                n_ref: *n_ref,
            },
            _ => unreachable!("controller state does not match its parameters"),
        }
    }

    /// Advance one step with a classical 4-stage explicit scheme, inputs held
    /// constant over the step.
    pub fn step(
        &self,
        state: &ControllerState,
        input: &GovernorInput,
        dt: f64,
    ) -> Result<(ControllerState, ControllerOutputs), ControllerError> {
        if !(input.v_mag.is_finite() && input.omega.is_finite() && input.p_e.is_finite()) {
            return Err(ControllerError::NonFinite("governor input"));
        }
        if dt <= 0.0 {
            return Err(ControllerError::NonFinite("non-positive dt"));
        }
        let x0 = Self::state_to_vec(state);
        let eval = |v: &[f64]| {
            let s = self.state_from_vec(state, v);
            self.derivatives(&s, input)
        };
        let k1 = eval(&x0);
        let k2 = eval(&add_scaled(&x0, &k1, dt / 2.0));
        let k3 = eval(&add_scaled(&x0, &k2, dt / 2.0));
        let k4 = eval(&add_scaled(&x0, &k3, dt));
        let mut x1 = x0.clone();
        for i in 0..x1.len() {
            x1[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let next = self.state_from_vec(state, &x1);
        let out = self.output(&next, input);
        Ok((next, out))
    }
}

fn add_scaled(x: &[f64], k: &[f64], h: f64) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equilibrium_holds_outputs() {
        let cases: Vec<ControllerParams> = vec![
            ControllerParams::Sexs(SexsParams::default()),
            ControllerParams::Tgov1(Tgov1Params::default()),
            ControllerParams::Gast(GastParams::default()),
            ControllerParams::Hygov(HygovParams::default()),
        ];
        for ctrl in cases {
            let st = ctrl.init(1.0, 2.0, 0.6).unwrap();
            let input = GovernorInput { v_mag: 1.0, omega: 0.0, p_e: 0.6 };
            let mut cur = st.clone();
            for _ in 0..1000 {
                let (next, out) = ctrl.step(&cur, &input, 1e-3).unwrap();
                match out {
                    ControllerOutputs::Efd(e) => assert_relative_eq!(e, 2.0, epsilon = 1e-9),
                    ControllerOutputs::Pmech(pm) => assert_relative_eq!(pm, 0.6, epsilon = 1e-9),
                }
                cur = next;
            }
            let a = ControllerParams::state_to_vec(&st);
            let b = ControllerParams::state_to_vec(&cur);
            for (x, y) in a.iter().zip(&b) {
                assert_relative_eq!(x, y, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn sexs_raises_field_on_voltage_dip() {
        let ctrl = ControllerParams::Sexs(SexsParams::default());
        let st = ctrl.init(1.0, 2.0, 0.0).unwrap();
        let input = GovernorInput { v_mag: 0.99, omega: 0.0, p_e: 0.0 };
        let mut cur = st;
        let mut prev_efd = 2.0;
        for _ in 0..20_000 {
            let (next, out) = ctrl.step(&cur, &input, 1e-3).unwrap();
            let ControllerOutputs::Efd(e) = out else { panic!("SEXS yields Efd") };
            assert!(e >= prev_efd - 1e-12, "Efd must rise monotonically toward the new equilibrium");
            prev_efd = e;
            cur = next;
        }
        assert!(prev_efd > 2.8, "1% dip with K=100 should raise Efd by about 1.0 within 20 s");
    }

    #[test]
    fn limits_are_respected_under_bounded_inputs() {
        let p = SexsParams { e_max: 3.0, ..SexsParams::default() };
        let ctrl = ControllerParams::Sexs(p);
        let mut cur = ctrl.init(1.0, 2.0, 0.0).unwrap();
        for k in 0..5000 {
            let v = 1.0 + 0.3 * (0.01 * k as f64).sin();
            let input = GovernorInput { v_mag: v, omega: 0.0, p_e: 0.0 };
            let (next, out) = ctrl.step(&cur, &input, 1e-3).unwrap();
            let ControllerOutputs::Efd(e) = out else { unreachable!() };
            assert!((0.0..=3.0).contains(&e), "Efd {e} escaped limits");
            cur = next;
        }
    }

    #[test]
    fn hygov_gate_stays_in_range() {
        let ctrl = ControllerParams::Hygov(HygovParams::default());
        let mut cur = ctrl.init(1.0, 0.0, 0.62).unwrap();
        for k in 0..5000 {
            let input = GovernorInput {
                v_mag: 1.0,
                omega: 0.05 * (0.02 * k as f64).sin(),
                p_e: 0.62,
            };
            let (next, _) = ctrl.step(&cur, &input, 1e-3).unwrap();
            if let ControllerState::Hygov { gate, .. } = next {
                assert!((0.0..=1.0).contains(&gate), "gate {gate} escaped [0, 1]");
            }
            cur = next;
        }
    }
}
