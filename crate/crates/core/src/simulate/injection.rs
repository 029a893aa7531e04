use serde::{Deserialize, Serialize};

/// Field-voltage modulation: a carrier sine with a slow amplitude
/// modulation, switched in at `start` for `duration` seconds and anchored at
/// the pre-event field voltage so the onset is continuous.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfdModulation {
    pub e_fd0: f64,
    pub a_int1: f64,
    pub f_int1: f64,
    pub a_int2: f64,
    pub f_int2: f64,
    pub start: f64,
    pub duration: f64,
}

impl EfdModulation {
    /// Paper scenario A1 (anchor `e_fd0` is resolved from the bench at run
    /// time when building the scenario).
    pub fn a1(e_fd0: f64) -> Self {
        Self { e_fd0, a_int1: 0.5, f_int1: 0.75, a_int2: 0.1, f_int2: 0.025, start: 2.0, duration: 100.0 }
    }
}

/// Forced field voltage at `elapsed` seconds after onset.
pub fn efd_modulation(elapsed: f64, p: &EfdModulation) -> f64 {
    let w1 = 2.0 * std::f64::consts::PI * p.f_int1;
    let w2 = 2.0 * std::f64::consts::PI * p.f_int2;
    p.e_fd0 + p.a_int1 * (w1 * elapsed).sin() * (1.0 + p.a_int2 * (w2 * elapsed).sin())
}

/// Square-wave gate signal with 50% duty cycle and a piecewise-linear
/// instantaneous frequency: `f_start` ramps to `f_max` at `t_peak`, then back
/// to `f_start` at `t_end` (times relative to onset).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateSquare {
    pub g_0: f64,
    pub a_g: f64,
    pub f_start: f64,
    pub f_max: f64,
    pub t_peak: f64,
    pub t_end: f64,
    pub start: f64,
}

impl GateSquare {
    /// Paper scenario A2.
    pub fn a2(g_0: f64) -> Self {
        Self { g_0, a_g: 0.1, f_start: 0.05, f_max: 0.2, t_peak: 50.0, t_end: 100.0, start: 2.0 }
    }

    /// Instantaneous frequency of the square wave.
    pub fn freq(&self, elapsed: f64) -> f64 {
        if elapsed <= 0.0 {
            self.f_start
        } else if elapsed < self.t_peak {
            self.f_start + (self.f_max - self.f_start) * elapsed / self.t_peak
        } else if elapsed < self.t_end {
            self.f_max - (self.f_max - self.f_start) * (elapsed - self.t_peak) / (self.t_end - self.t_peak)
        } else {
            self.f_start
        }
    }

    /// Accumulated phase (cycles) since onset, in closed form. A square wave
    /// defined on the accumulated phase stays well defined under the ramp and
    /// reduces to the fixed-frequency form when `f_start = f_max`.
    pub fn phase(&self, elapsed: f64) -> f64 {
        if elapsed <= 0.0 {
            return 0.0;
        }
        let up = |tau: f64| {
            self.f_start * tau + 0.5 * (self.f_max - self.f_start) * tau * tau / self.t_peak
        };
        if elapsed < self.t_peak {
            return up(elapsed);
        }
        let head = up(self.t_peak);
        let span = self.t_end - self.t_peak;
        let down = |u: f64| self.f_max * u - 0.5 * (self.f_max - self.f_start) * u * u / span;
        if elapsed < self.t_end {
            head + down(elapsed - self.t_peak)
        } else {
            head + down(span) + self.f_start * (elapsed - self.t_end)
        }
    }
}

/// Forced gate position at `elapsed` seconds after onset: high for the first
/// half of every accumulated-phase cycle.
pub fn gate_square(elapsed: f64, p: &GateSquare) -> f64 {
    let phase = p.phase(elapsed).fract();
    if phase < 0.5 {
        p.g_0 * (1.0 + p.a_g / 2.0)
    } else {
        p.g_0 * (1.0 - p.a_g / 2.0)
    }
}

/// Disturbance applied to one unit during a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FoInjection {
    EfdModulation {
        unit: String,
        #[serde(flatten)]
        params: EfdModulation,
    },
    GateSquare {
        unit: String,
        #[serde(flatten)]
        params: GateSquare,
    },
}

impl FoInjection {
    pub fn unit(&self) -> &str {
        match self {
            FoInjection::EfdModulation { unit, .. } | FoInjection::GateSquare { unit, .. } => unit,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            FoInjection::EfdModulation { params, .. } => {
                if params.a_int1 < 0.0 || params.a_int2 < 0.0 {
                    return Err("modulation amplitudes must be >= 0".into());
                }
                if params.f_int1 <= 0.0 || params.f_int2 <= 0.0 {
                    return Err("modulation frequencies must be > 0".into());
                }
                if params.duration <= 0.0 {
                    return Err("duration must be > 0".into());
                }
            }
            FoInjection::GateSquare { params, .. } => {
                if params.a_g < 0.0 {
                    return Err("gate amplitude must be >= 0".into());
                }
                if params.f_start <= 0.0 || params.f_max <= 0.0 {
                    return Err("gate frequencies must be > 0".into());
                }
                if !(params.t_peak > 0.0 && params.t_end > params.t_peak) {
                    return Err("need 0 < t_peak < t_end".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn efd_modulation_matches_closed_form() {
        let p = EfdModulation::a1(2.105);
        // sin(0) = 0 at onset
        assert_relative_eq!(efd_modulation(0.0, &p), 2.105, epsilon = 1e-12);
        // quarter period of the 0.75 Hz carrier
        let t = 1.0 / 3.0;
        let expected = 2.105 + 0.5 * (1.0 + 0.1 * (2.0 * std::f64::consts::PI * 0.025 / 3.0).sin());
        assert_relative_eq!(efd_modulation(t, &p), expected, epsilon = 1e-12);
        assert_relative_eq!(efd_modulation(t, &p), 2.6076, epsilon = 1e-4);
        // zero amplitude keeps the anchor
        let flat = EfdModulation { a_int1: 0.0, ..p };
        for k in 0..100 {
            assert_relative_eq!(efd_modulation(0.37 * k as f64, &flat), 2.105);
        }
    }

    #[test]
    fn gate_square_levels_and_duty() {
        let p = GateSquare::a2(0.60278);
        assert_relative_eq!(gate_square(1e-9, &p), 0.60278 * 1.05, epsilon = 1e-9);
        assert_relative_eq!(gate_square(1e-9, &p), 0.63292, epsilon = 1e-4);
        let flat = GateSquare { a_g: 0.0, ..p };
        for k in 0..200 {
            assert_relative_eq!(gate_square(0.51 * k as f64, &flat), 0.60278);
        }
    }

    #[test]
    fn switch_count_matches_integrated_frequency() {
        // closed form: total phase over [0, 100] s is 12.5 cycles, so the
        // output flips floor(2 * 12.5) = 25 times
        let p = GateSquare::a2(0.60278);
        assert_relative_eq!(p.phase(100.0), 12.5, epsilon = 1e-12);
        let dt = 1e-3;
        let mut switches = 0;
        let mut prev = gate_square(0.0, &p);
        let mut t = dt;
        while t <= 100.0 + dt / 2.0 {
            let g = gate_square(t, &p);
            if (g - prev).abs() > 1e-12 {
                switches += 1;
            }
            prev = g;
            t += dt;
        }
        assert_eq!(switches, 25);
    }

    #[test]
    fn switch_instants_solve_the_phase_equation() {
        let p = GateSquare::a2(0.60278);
        let dt = 1e-3;
        let mut prev = gate_square(0.0, &p);
        let mut t = dt;
        let mut k = 1_u32;
        let mut last_switch = 0.0;
        while t <= 100.0 {
            let g = gate_square(t, &p);
            if (g - prev).abs() > 1e-12 {
                assert!(t > last_switch, "switch instants must be monotone");
                // the k-th switch solves phase(t) = k/2 within one step
                let target = k as f64 / 2.0;
                assert!(
                    p.phase(t - dt) <= target + 1e-12 && p.phase(t) >= target - 1e-12,
                    "switch {k} at t={t} does not bracket phase {target}"
                );
                last_switch = t;
                k += 1;
            }
            prev = g;
            t += dt;
        }
    }
}
