//! End-to-end source location: playback, injection reconstruction, the
//! per-generator estimation fan-out, residual-energy ranking, and the
//! control-loop energy verdict, wrapped into one report.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{
    detect_onset, detrend, loop_verdict, trend_slope, EnergyTrace, LoopVerdict,
};
use crate::estimate::{dse_generator, perturb_state, DseOptions, DseResult};
use crate::models::network_to_dq;
use crate::playback::{current_injection, event_playback, identify_source, residual_energy};
use crate::pmuio::{decimate_mean, decimate_mean_series, lowpass_triangular, PhasorTrace};
use crate::simulate::{TestBench, UnitKind, UnitState};

#[derive(Debug, Error)]
#[error("locate failed in stage '{stage}': {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
    /// whatever the pipeline had produced before the failure
    pub partial: Box<LocateReport>,
}

/// Tunables for a locate run; serialized into the report so every output is
/// self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LocateOptions {
    /// sliding residual-energy window, seconds
    pub window_s: f64,
    /// centered moving-average width for oscillatory-component extraction
    pub detrend_window_s: f64,
    /// onset detector: baseline span, exceedance factor, sustain time
    pub baseline_s: f64,
    pub onset_factor: f64,
    pub onset_sustain_s: f64,
    pub dse: DseOptions,
    /// zero-phase low-pass applied to the measurements before playback and
    /// estimation; total kernel width in seconds, 0 disables
    pub prefilter_window_s: f64,
    /// reporting rate the estimation fan-out runs at; measurements are
    /// boxcar-averaged down to this rate so no information is discarded
    pub dse_rate_hz: f64,
    /// measurement-noise variance handed to the filters; `None` estimates it
    /// from the pre-event first differences of the bus voltage
    pub dse_r: Option<f64>,
    /// frequency-channel noise variance; `None` estimates it the same way
    pub dse_r_freq: Option<f64>,
    /// SCADA-style initialization error applied to playback and DSE inits
    pub init_error_frac: f64,
    pub init_error_seed: u64,
    /// decimation stride for series embedded in the JSON report
    pub report_stride: usize,
}

impl Default for LocateOptions {
    fn default() -> Self {
        Self {
            window_s: 5.0,
            detrend_window_s: 10.0,
            baseline_s: 1.5,
            onset_factor: 3.0,
            onset_sustain_s: 1.0,
            dse: DseOptions::default(),
            prefilter_window_s: 0.24,
            dse_rate_hz: 50.0,
            dse_r: None,
            dse_r_freq: None,
            init_error_frac: 0.0,
            init_error_seed: 0,
            report_stride: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankingSummary {
    pub unit_ids: Vec<String>,
    pub final_energies: Vec<f64>,
    pub identified: String,
    pub margin: f64,
    /// sliding-window energy series, decimated by `stride`
    pub energy_series: Vec<Vec<f64>>,
    pub stride: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OnsetInfo {
    pub index: usize,
    pub time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergySummary {
    pub w_field_final: f64,
    pub w_mech_final: f64,
    pub w_field_slope: f64,
    pub w_mech_slope: f64,
    pub event_window_s: (f64, f64),
}

/// Self-describing outcome of one locate run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LocateReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_sha256: Option<String>,
    pub fo_detected: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub onset: Option<OnsetInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranking: Option<RankingSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<LoopVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergySummary>,
    pub options: Option<LocateOptions>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
}

impl LocateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Conclusive means: either no FO was detected at all, or a generator
    /// was identified and the loop verdict is not inconclusive.
    pub fn is_conclusive(&self) -> bool {
        if !self.fo_detected {
            return true;
        }
        matches!(
            self.verdict.as_ref().map(|v| v.source),
            Some(crate::energy::SourceLoop::Excitation) | Some(crate::energy::SourceLoop::Mechanical)
        )
    }
}

/// Estimation byproducts of a locate run, for callers that want the full
/// trajectories (tests, trace export).
#[derive(Debug, Default)]
pub struct LocateArtifacts {
    pub dse: Vec<(String, DseResult)>,
    pub energy_trace: Option<EnergyTrace>,
}

pub fn locate(
    bench: &TestBench,
    trace: &PhasorTrace,
    opts: &LocateOptions,
) -> Result<(LocateReport, LocateArtifacts), PipelineError> {
    let mut report = LocateReport {
        options: Some(opts.clone()),
        manifest_sha256: trace.meta.manifest_sha256.clone(),
        ..Default::default()
    };
    let mut artifacts = LocateArtifacts::default();

    let fail = |stage: &'static str, message: String, report: &LocateReport| PipelineError {
        stage,
        message,
        partial: Box::new(report.clone()),
    };

    // measurements at PMU reporting rates are held onto the model grid
    let trace = if trace.dt > bench.ts * 1.5 {
        let resampled = trace.resample_zoh(bench.ts);
        report
            .warnings
            .push(format!("resampled {} Hz data onto the {} ms grid by zero-order hold", 1.0 / trace.dt, bench.ts * 1e3));
        resampled
    } else {
        trace.clone()
    };

    // strip wideband measurement noise; the FO band passes intact
    let trace = if opts.prefilter_window_s > 0.0 {
        lowpass_triangular(&trace, opts.prefilter_window_s)
    } else {
        trace
    };

    // playback under the normal-operation hypothesis
    let mut init = bench.initial_state();
    if opts.init_error_frac > 0.0 {
        for (u, st) in init.iter_mut().enumerate() {
            if let UnitState::Sync(s) = st {
                s.machine = perturb_state(
                    &s.machine,
                    opts.init_error_frac,
                    opts.init_error_seed.wrapping_add(u as u64),
                );
            }
        }
    }
    let playback = event_playback(bench, &trace, &init)
        .map_err(|e| fail("playback", e.to_string(), &report))?;

    // the filters run at PMU reporting rate on boxcar-averaged data
    let factor = ((1.0 / (opts.dse_rate_hz * trace.dt)).round() as usize).max(1);
    let dec_trace = decimate_mean(&trace, factor);
    // measurement-noise variances for the filters: configured, or the
    // detrended pre-event variance of the decimated channels (which stays
    // honest when a pre-filter has correlated the raw samples)
    let baseline_n = ((opts.baseline_s / dec_trace.dt) as usize).max(4);
    fn pre_var_impl(series: &[f64], nb: usize) -> f64 {
        let nb = nb.clamp(4, series.len());
        let s = &series[..nb];
        let nf = nb as f64;
        let t_mean = (nf - 1.0) / 2.0;
        let y_mean = s.iter().sum::<f64>() / nf;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (k, y) in s.iter().enumerate() {
            let tx = k as f64 - t_mean;
            sxx += tx * tx;
            sxy += tx * (y - y_mean);
        }
        let slope = sxy / sxx;
        s.iter()
            .enumerate()
            .map(|(k, y)| {
                let r = y - y_mean - slope * (k as f64 - t_mean);
                r * r
            })
            .sum::<f64>()
            / nf
    }
    let pre_var_fn = move |series: &[f64]| pre_var_impl(series, baseline_n);
    let r_dec = opts
        .dse_r
        .unwrap_or_else(|| {
            0.5 * (pre_var_fn(&dec_trace.v.iter().map(|v| v.re).collect::<Vec<_>>())
                + pre_var_fn(&dec_trace.v.iter().map(|v| v.im).collect::<Vec<_>>()))
        })
        .max(1e-10);
    let rf_dec = opts.dse_r_freq.unwrap_or_else(|| pre_var_fn(&dec_trace.freq)).max(1e-14);
    let mut dse_opts = opts.dse.clone();
    // the third channel is the angle advance integrated from the frequency
    // over the consistency window, in radians
    let lag = ((dse_opts.angle_window_s / dec_trace.dt).round() as f64).max(1.0);
    let w = 2.0 * std::f64::consts::PI * dec_trace.dt;
    dse_opts.r_diag = [r_dec, r_dec, w * w * lag * rf_dec];

    // per-generator reconstruction + estimation fan-out (hypotheses are
    // independent; run them on scoped threads)
    let sync_units: Vec<usize> = (0..bench.units.len())
        .filter(|i| bench.units[*i].is_synchronous())
        .collect();
    let mut fanout: Vec<(String, DseResult)> = Vec::with_capacity(sync_units.len());
    {
        let results: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = sync_units
                .iter()
                .map(|&j| {
                    let playback = &playback;
                    let trace = &trace;
                    let dec_trace = &dec_trace;
                    let init = &init;
                    let dse_opts = &dse_opts;
                    scope.spawn(move || {
                        let UnitKind::Sync { params, .. } = &bench.units[j].kind else {
                            unreachable!()
                        };
                        // reconstruction stays at full rate (exact per-sample
                        // arithmetic); only the filter input is decimated
                        let currents =
                            current_injection(j, &trace.i, playback).map_err(|e| e.to_string())?;
                        let dec_currents = decimate_mean_series(&currents, factor);
                        let UnitState::Sync(s0) = &init[j] else { unreachable!() };
                        // the reconstructed current is an input, and its noise
                        // lands in the voltage prediction through the
                        // subtransient reactance; budget it per hypothesis so
                        // every filter's standardized floor is comparable
                        let k_mach = bench.s_base / params.mva_base;
                        let i_var = {
                            let re: Vec<f64> = dec_currents.iter().map(|c| c.re * k_mach).collect();
                            let im: Vec<f64> = dec_currents.iter().map(|c| c.im * k_mach).collect();
                            0.5 * (pre_var_fn(&re) + pre_var_fn(&im))
                        };
                        let mut opts_j = dse_opts.clone();
                        let xpp = 0.5 * (params.xd_pp + params.xq_pp);
                        opts_j.r_diag[0] += xpp * xpp * i_var;
                        opts_j.r_diag[1] += xpp * xpp * i_var;
                        let dse = dse_generator(
                            params,
                            dec_trace,
                            &dec_currents,
                            bench.s_base,
                            &s0.machine,
                            &opts_j,
                        )
                        .map_err(|e| format!("unit '{}': {e}", bench.units[j].id))?;
                        Ok::<_, String>((bench.units[j].id.clone(), dse))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("DSE thread panicked")).collect()
        });
        for r in results {
            match r {
                Ok((id, dse)) => fanout.push((id, dse)),
                Err(e) => return Err(fail("dse", e, &report)),
            }
        }
    }
    artifacts.dse = fanout.clone();

    // residual-energy ranking on the filter timeline; every record is
    // scaled by its own pre-event RMS first, so hypotheses with different
    // machine constants share a common quiescent floor
    let dt = dec_trace.dt;
    let window = ((opts.window_s / dt).round() as usize).max(1);
    let mut hypotheses = Vec::new();
    for (id, dse) in &fanout {
        let mut record = dse.residual.clone();
        let nb = ((opts.baseline_s / dt) as usize).clamp(4, record.y_max.len());
        let n0 = (nb / 2).max(2);
        let pre_rms = (record.y_max[n0..nb].iter().map(|y| y * y).sum::<f64>() / (nb - n0) as f64)
            .sqrt()
            .max(1e-300);
        for y in record.y_max.iter_mut() {
            *y /= pre_rms;
        }
        let window = window.min(record.len().saturating_sub(1)).max(1);
        let e = residual_energy(&record, window)
            .map_err(|e| fail("ranking", e.to_string(), &report))?;
        hypotheses.push((id.clone(), e));
    }
    let ranking =
        identify_source(&hypotheses).map_err(|e| fail("ranking", e.to_string(), &report))?;

    // onset: earliest sustained exceedance over any hypothesis energy,
    // skipping the sliding-window fill so the ramp cannot fake a baseline
    let fill = window.min(hypotheses[0].1.len());
    let mut onset: Option<usize> = None;
    for (_, e) in &hypotheses {
        if let Some(k) =
            detect_onset(&e[fill..], dt, opts.baseline_s, opts.onset_factor, opts.onset_sustain_s)
        {
            let k = k + fill;
            onset = Some(onset.map_or(k, |cur: usize| cur.min(k)));
        }
    }
    report.fo_detected = onset.is_some();
    report.onset = onset.map(|k| OnsetInfo { index: k, time_s: dec_trace.time(k) });

    let stride = opts.report_stride.max(1);
    report.ranking = Some(RankingSummary {
        unit_ids: ranking.unit_ids.clone(),
        final_energies: ranking.final_energies.clone(),
        identified: ranking.identified.clone(),
        margin: ranking.margin,
        energy_series: ranking
            .energies
            .iter()
            .map(|e| e.iter().step_by(stride).copied().collect())
            .collect(),
        stride,
        warnings: ranking.warnings.clone(),
    });

    if !report.fo_detected {
        report.warnings.push("no FO detected; energy verdict skipped".into());
        return Ok((report, artifacts));
    }
    let onset_idx = onset.expect("onset known when fo_detected");

    // control-loop energies of the identified generator, from the estimates
    let source_idx = fanout
        .iter()
        .position(|(id, _)| *id == ranking.identified)
        .expect("identified unit is in the fan-out");
    let (unit_id, dse) = &fanout[source_idx];
    let j = bench.unit_index(unit_id).expect("unit exists");
    let UnitKind::Sync { params, .. } = &bench.units[j].kind else { unreachable!() };
    let currents = current_injection(j, &trace.i, &playback)
        .map_err(|e| fail("energy", e.to_string(), &report))?;
    let currents = decimate_mean_series(&currents, factor);

    let n = dse.time.len();
    let mut xad_ifd = Vec::with_capacity(n);
    for k in 0..n {
        let state = crate::models::MachineState::from_array(&dse.x_hat[k]);
        let i_m = currents[k] * (bench.s_base / params.mva_base);
        let (i_d, i_q) = network_to_dq(i_m.re, i_m.im, state.delta);
        let (_, out) =
            crate::models::genrou_derivatives_at_current(&state, 0.0, 0.0, i_d, i_q, params);
        xad_ifd.push(out.xad_ifd);
    }
    let efd = dse.efd_series_smooth(opts.dse.output_smooth_s);
    let w_field = crate::energy::w_field_series(&efd, &xad_ifd, params, dt);
    let pmech_osc = detrend(
        &dse.pmech_series_smooth(opts.dse.output_smooth_s),
        opts.detrend_window_s,
        dt,
    );
    let delta_osc = detrend(&dse.delta_series(), opts.detrend_window_s, dt);
    let w_mech = crate::energy::w_mech_series(&pmech_osc, &delta_osc);

    let event_field = &w_field[onset_idx..];
    let event_mech = &w_mech[onset_idx..];
    let verdict = loop_verdict(event_field, event_mech, dt)
        .map_err(|e| fail("energy", e.to_string(), &report))?;
    let (fs, _) =
        trend_slope(event_field, dt).map_err(|e| fail("energy", e.to_string(), &report))?;
    let (ms, _) =
        trend_slope(event_mech, dt).map_err(|e| fail("energy", e.to_string(), &report))?;

    report.energy = Some(EnergySummary {
        w_field_final: *w_field.last().unwrap(),
        w_mech_final: *w_mech.last().unwrap(),
        w_field_slope: fs,
        w_mech_slope: ms,
        event_window_s: (dec_trace.time(onset_idx), dec_trace.time(n - 1)),
    });
    report.warnings.extend(verdict.warnings.clone());
    report.verdict = Some(verdict);
    artifacts.energy_trace = Some(EnergyTrace {
        dt,
        t0: dec_trace.t0,
        w_field,
        w_mech,
        w_e: None,
        w_g: None,
        branch_w: None,
    });

    Ok((report, artifacts))
}
