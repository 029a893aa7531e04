//! PMU data handling: the point-of-connection phasor trace type, contest
//! style four-file ingestion, unified CSV input/output, and synthetic
//! measurement noise calibrated against the TVE and FE metrics.

mod contest;
mod csvio;

pub use contest::{parse_contest_dataset, ContestOptions};
pub use csvio::{read_phasor_csv, write_phasor_csv};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Phasor;

#[derive(Debug, Error)]
pub enum PmuError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Malformed { path: String, line: usize, msg: String },
    #[error("channel files disagree: {0}")]
    Mismatch(String),
    #[error("trace invalid: {0}")]
    Invalid(String),
}

/// Provenance and base information carried next to every trace.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TraceMeta {
    pub s_base_mva: f64,
    pub f_nominal_hz: f64,
    pub bus: String,
    pub branch: String,
    /// sample indices that contained unusable data in the source files
    #[serde(default)]
    pub gaps: Vec<usize>,
    /// original reporting rate when the trace was zero-order-hold resampled
    #[serde(default)]
    pub resampled_from_hz: Option<f64>,
    /// set when the frequency channel was derived from the angle series
    #[serde(default)]
    pub frequency_derived: bool,
    #[serde(default)]
    pub manifest_sha256: Option<String>,
}

/// Time-stamped bus-voltage and branch-current phasors plus frequency, all
/// per-unit on the declared bases, on a uniform grid.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhasorTrace {
    pub dt: f64,
    pub t0: f64,
    pub v: Vec<Phasor>,
    pub i: Vec<Phasor>,
    pub freq: Vec<f64>,
    pub meta: TraceMeta,
}

impl PhasorTrace {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn validate(&self) -> Result<(), PmuError> {
        if self.dt <= 0.0 {
            return Err(PmuError::Invalid("dt must be > 0".into()));
        }
        if self.v.len() != self.i.len() || self.v.len() != self.freq.len() {
            return Err(PmuError::Invalid(format!(
                "channel lengths differ: v={} i={} f={}",
                self.v.len(),
                self.i.len(),
                self.freq.len()
            )));
        }
        for (k, v) in self.v.iter().enumerate() {
            if self.meta.gaps.binary_search(&k).is_ok() {
                continue;
            }
            if !v.re.is_finite() || !v.im.is_finite() || v.norm() <= 0.0 {
                return Err(PmuError::Invalid(format!("voltage sample {k} unusable and not marked as a gap")));
            }
        }
        Ok(())
    }

    /// Zero-order-hold resample onto a finer grid (the simulation step).
    pub fn resample_zoh(&self, target_dt: f64) -> PhasorTrace {
        if (target_dt - self.dt).abs() < 1e-12 {
            return self.clone();
        }
        let n = ((self.len() as f64 - 1.0) * self.dt / target_dt).floor() as usize + 1;
        let mut out = PhasorTrace {
            dt: target_dt,
            t0: self.t0,
            v: Vec::with_capacity(n),
            i: Vec::with_capacity(n),
            freq: Vec::with_capacity(n),
            meta: TraceMeta { resampled_from_hz: Some(1.0 / self.dt), ..self.meta.clone() },
        };
        for k in 0..n {
            let src = ((k as f64 * target_dt) / self.dt).floor() as usize;
            let src = src.min(self.len() - 1);
            out.v.push(self.v[src]);
            out.i.push(self.i[src]);
            out.freq.push(self.freq[src]);
        }
        out
    }
}

fn centered_ma(series: &[f64], half: usize) -> Vec<f64> {
    if half == 0 || series.len() < 3 {
        return series.to_vec();
    }
    let mut prefix = Vec::with_capacity(series.len() + 1);
    prefix.push(0.0);
    for v in series {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..series.len())
        .map(|k| {
            let side = half.min(k).min(series.len() - 1 - k);
            let (lo, hi) = (k - side, k + side);
            (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1) as f64
        })
        .collect()
}

/// Zero-phase low-pass over every channel: two cascaded centered moving
/// averages (a triangular kernel) of total width `window_s`. Keeps the FO
/// band essentially intact while stripping wideband measurement noise
/// before playback and estimation.
pub fn lowpass_triangular(trace: &PhasorTrace, window_s: f64) -> PhasorTrace {
    let half = ((window_s / trace.dt) / 4.0).round() as usize;
    if half == 0 {
        return trace.clone();
    }
    let filt2 = |series: Vec<f64>| centered_ma(&centered_ma(&series, half), half);
    let v_re = filt2(trace.v.iter().map(|v| v.re).collect());
    let v_im = filt2(trace.v.iter().map(|v| v.im).collect());
    let i_re = filt2(trace.i.iter().map(|v| v.re).collect());
    let i_im = filt2(trace.i.iter().map(|v| v.im).collect());
    let freq = filt2(trace.freq.clone());
    PhasorTrace {
        dt: trace.dt,
        t0: trace.t0,
        v: v_re.into_iter().zip(v_im).map(|(re, im)| Phasor::new(re, im)).collect(),
        i: i_re.into_iter().zip(i_im).map(|(re, im)| Phasor::new(re, im)).collect(),
        freq,
        meta: trace.meta.clone(),
    }
}

/// Block-average `factor` consecutive samples (anti-alias boxcar) and keep
/// one output sample per block, placed at the block center. This is how the
/// estimator consumes near-sample-rate data at a PMU-style reporting rate
/// without discarding information.
pub fn decimate_mean(trace: &PhasorTrace, factor: usize) -> PhasorTrace {
    if factor <= 1 {
        return trace.clone();
    }
    let n_out = trace.len() / factor;
    let mut out = PhasorTrace {
        dt: trace.dt * factor as f64,
        t0: trace.t0 + 0.5 * trace.dt * (factor as f64 - 1.0),
        v: Vec::with_capacity(n_out),
        i: Vec::with_capacity(n_out),
        freq: Vec::with_capacity(n_out),
        meta: TraceMeta { resampled_from_hz: Some(1.0 / trace.dt), ..trace.meta.clone() },
    };
    for b in 0..n_out {
        let lo = b * factor;
        let mut v = Phasor::new(0.0, 0.0);
        let mut i = Phasor::new(0.0, 0.0);
        let mut f = 0.0;
        for k in lo..lo + factor {
            v += trace.v[k];
            i += trace.i[k];
            f += trace.freq[k];
        }
        let inv = 1.0 / factor as f64;
        out.v.push(v * inv);
        out.i.push(i * inv);
        out.freq.push(f * inv);
    }
    out
}

/// Boxcar decimation of a bare phasor series, aligned with [`decimate_mean`].
pub fn decimate_mean_series(series: &[Phasor], factor: usize) -> Vec<Phasor> {
    if factor <= 1 {
        return series.to_vec();
    }
    let n_out = series.len() / factor;
    (0..n_out)
        .map(|b| {
            let lo = b * factor;
            let sum: Phasor = series[lo..lo + factor].iter().sum();
            sum / factor as f64
        })
        .collect()
}

/// Measurement-noise specification: total vector error target on the
/// phasors, frequency error target in Hz, both read as 3-sigma levels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub tve: f64,
    pub fe_hz: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn quiet(seed: u64) -> Self {
        Self { tve: 0.0, fe_hz: 0.0, seed }
    }
}

/// Additive circularly-symmetric Gaussian noise on each phasor with
/// per-quadrature sigma `TVE/(3*sqrt(2))` of the sample magnitude, and
/// Gaussian frequency noise with sigma `FE/3`. Deterministic per seed.
pub fn add_noise(trace: &PhasorTrace, spec: &NoiseSpec) -> PhasorTrace {
    if spec.tve == 0.0 && spec.fe_hz == 0.0 {
        return trace.clone();
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let sig_q = spec.tve / (3.0 * std::f64::consts::SQRT_2);
    let sig_f = spec.fe_hz / 3.0;
    let mut out = trace.clone();
    for k in 0..out.len() {
        let sv = sig_q * trace.v[k].norm();
        out.v[k] += Phasor::new(sv * unit.sample(&mut rng), sv * unit.sample(&mut rng));
        let si = sig_q * trace.i[k].norm();
        out.i[k] += Phasor::new(si * unit.sample(&mut rng), si * unit.sample(&mut rng));
        out.freq[k] += sig_f * unit.sample(&mut rng);
    }
    out
}

/// Signal-to-noise ratio between an FO signal and the measurement noise:
/// `20 log10(Var[signal] / sigma_v^2)`. Returns `-inf` for a flat signal.
pub fn snr_fo(fo_signal: &[f64], sigma_v: f64) -> f64 {
    assert!(sigma_v > 0.0, "sigma_v must be positive");
    assert!(!fo_signal.is_empty(), "empty signal");
    let mean = fo_signal.iter().sum::<f64>() / fo_signal.len() as f64;
    let var = fo_signal.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / fo_signal.len() as f64;
    if var == 0.0 {
        return f64::NEG_INFINITY;
    }
    20.0 * (var / (sigma_v * sigma_v)).log10()
}

/// Per-sample total vector error of a noisy trace against its clean
/// counterpart, with the summaries the calibration checks need.
#[derive(Debug, Clone)]
pub struct TveSummary {
    samples: Vec<f64>,
    /// three times the RMS per-sample TVE; equals the TVE target for noise
    /// drawn by [`add_noise`]
    pub three_sigma: f64,
    pub max: f64,
}

impl TveSummary {
    pub fn percentile(&self, p: f64) -> f64 {
        let mut s = self.samples.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let idx = ((p / 100.0) * (s.len() as f64 - 1.0)).round() as usize;
        s[idx.min(s.len() - 1)]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn empirical_tve(noisy: &[Phasor], clean: &[Phasor]) -> Result<TveSummary, PmuError> {
    if noisy.len() != clean.len() {
        return Err(PmuError::Mismatch(format!(
            "trace lengths differ: {} vs {}",
            noisy.len(),
            clean.len()
        )));
    }
    let mut samples = Vec::with_capacity(noisy.len());
    for (k, (n, c)) in noisy.iter().zip(clean).enumerate() {
        let mag = c.norm();
        if mag == 0.0 {
            return Err(PmuError::Invalid(format!("clean sample {k} has zero magnitude")));
        }
        samples.push((n - c).norm() / mag);
    }
    let mean_sq = samples.iter().map(|t| t * t).sum::<f64>() / samples.len() as f64;
    let max = samples.iter().cloned().fold(0.0, f64::max);
    Ok(TveSummary { samples, three_sigma: 3.0 * mean_sq.sqrt(), max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_trace(n: usize) -> PhasorTrace {
        PhasorTrace {
            dt: 1e-3,
            t0: 0.0,
            v: vec![Phasor::new(1.0, 0.0); n],
            i: vec![Phasor::new(0.5, -0.1); n],
            freq: vec![60.0; n],
            meta: TraceMeta::default(),
        }
    }

    #[test]
    fn zero_tve_is_identity() {
        let t = unit_trace(100);
        let n = add_noise(&t, &NoiseSpec::quiet(7));
        assert_eq!(t.v, n.v);
        assert_eq!(t.i, n.i);
        assert_eq!(t.freq, n.freq);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let t = unit_trace(256);
        let spec = NoiseSpec { tve: 0.01, fe_hz: 5e-4, seed: 42 };
        let a = add_noise(&t, &spec);
        let b = add_noise(&t, &spec);
        assert_eq!(a.v, b.v);
        assert_eq!(a.freq, b.freq);
        let c = add_noise(&t, &NoiseSpec { seed: 43, ..spec });
        assert_ne!(a.v, c.v);
    }

    #[test]
    fn sigma_matches_the_printed_formula() {
        // TVE = 1% -> sigma_re = sigma_im = 0.01/(3 sqrt 2) ~ 2.357e-3
        let sig = 0.01 / (3.0 * std::f64::consts::SQRT_2);
        assert_relative_eq!(sig, 2.357e-3, epsilon = 1e-6);
    }

    #[test]
    fn three_sigma_tve_calibration() {
        let t = unit_trace(100_000);
        let spec = NoiseSpec { tve: 0.01, fe_hz: 0.0, seed: 1 };
        let noisy = add_noise(&t, &spec);
        let summary = empirical_tve(&noisy.v, &t.v).unwrap();
        assert!(
            (summary.three_sigma - 0.01).abs() / 0.01 < 0.10,
            "3-sigma TVE {} not within 10% of the 1% target",
            summary.three_sigma
        );
    }

    #[test]
    fn tve_of_known_offset() {
        let clean = vec![Phasor::new(1.0, 0.0); 10];
        let noisy: Vec<_> = clean.iter().map(|c| c + Phasor::new(0.01, 0.0)).collect();
        let s = empirical_tve(&noisy, &clean).unwrap();
        assert_relative_eq!(s.max, 0.01, epsilon = 1e-12);
        assert_relative_eq!(s.percentile(50.0), 0.01, epsilon = 1e-12);
        let same = empirical_tve(&clean, &clean).unwrap();
        assert_eq!(same.max, 0.0);
    }

    #[test]
    fn snr_formula_points() {
        // Var equal to sigma^2 -> 0 dB; ratio 10 -> 20 dB; ratio 100 -> 40 dB
        let sig: Vec<f64> = (0..10_000)
            .map(|k| (2.0f64).sqrt() * (0.01 * k as f64).sin())
            .collect();
        // Var[sqrt(2) sin] = 1.0
        assert!(snr_fo(&sig, 1.0).abs() < 0.05);
        assert!((snr_fo(&sig, (0.1f64).sqrt()) - 20.0).abs() < 0.05);
        assert!((snr_fo(&sig, 0.1) - 40.0).abs() < 0.05);
        assert_eq!(snr_fo(&[3.0, 3.0, 3.0], 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn zoh_resampling_repeats_samples() {
        let mut t = unit_trace(10);
        for (k, v) in t.v.iter_mut().enumerate() {
            *v = Phasor::new(k as f64, 0.0);
        }
        t.dt = 0.01;
        let r = t.resample_zoh(0.0025);
        assert_eq!(r.v[0].re, 0.0);
        assert_eq!(r.v[3].re, 0.0);
        assert_eq!(r.v[4].re, 1.0);
        assert_eq!(r.meta.resampled_from_hz, Some(100.0));
    }
}
