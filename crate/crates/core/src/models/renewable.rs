use serde::{Deserialize, Serialize};

use crate::Phasor;

/// Renewable unit reduced to a dispatch-tracking current source with one
/// first-order lag. Adequate here because these units hold dispatch during
/// the studied events; only their playback currents matter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenewableParams {
    /// current-source lag, seconds
    pub t_lag: f64,
    pub mva_base: f64,
}

impl Default for RenewableParams {
    fn default() -> Self {
        Self { t_lag: 0.02, mva_base: 100.0 }
    }
}

/// The injected current phasor is the state (machine base).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewableState {
    pub i: Phasor,
}

impl RenewableParams {
    /// Current that delivers `(p, q)` machine-base per-unit at voltage `v`.
    pub fn target_current(p: f64, q: f64, v: Phasor) -> Phasor {
        (Phasor::new(p, -q)) / v.conj()
    }

    pub fn init(&self, p: f64, q: f64, v: Phasor) -> RenewableState {
        RenewableState { i: Self::target_current(p, q, v) }
    }

    pub fn derivative(&self, state: &RenewableState, p: f64, q: f64, v: Phasor) -> Phasor {
        (Self::target_current(p, q, v) - state.i) / self.t_lag
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn initialized_source_delivers_dispatch() {
        let p = RenewableParams::default();
        let v = Phasor::new(1.01, 0.05);
        let st = p.init(0.8, 0.1, v);
        let s = v * st.i.conj();
        assert_relative_eq!(s.re, 0.8, epsilon = 1e-12);
        assert_relative_eq!(s.im, 0.1, epsilon = 1e-12);
        let d = p.derivative(&st, 0.8, 0.1, v);
        assert_relative_eq!(d.norm(), 0.0, epsilon = 1e-12);
    }
}
