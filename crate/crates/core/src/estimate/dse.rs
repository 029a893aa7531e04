use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ukfui_step_param, FilterConfig, FilterError, FilterState};
use crate::models::{genrou_derivatives_at_current, network_to_dq, GenrouParams, MachineState};
use crate::pmuio::PhasorTrace;
use crate::Phasor;

/// Per-step innovation record of one generator hypothesis, with the channel
/// of greatest variability promoted to the ranking signal.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub dt: f64,
    pub t0: f64,
    /// raw innovation vectors, one per measurement instant
    pub y: Vec<Vec<f64>>,
    /// innovations standardized by their predicted standard deviation;
    /// the ranking channel is drawn from these so hypotheses with different
    /// machine constants share a common noise floor
    pub y_std: Vec<Vec<f64>>,
    /// standardized component with the largest sample variance
    pub y_max_channel: usize,
    pub y_max: Vec<f64>,
}

impl ResidualRecord {
    pub fn from_innovations(dt: f64, t0: f64, y: Vec<Vec<f64>>, y_std: Vec<Vec<f64>>) -> Self {
        let m = y_std.first().map_or(0, |v| v.len());
        let mut channel = 0;
        let mut best = f64::NEG_INFINITY;
        for c in 0..m {
            let series: Vec<f64> = y_std.iter().map(|v| v[c]).collect();
            let mean = series.iter().sum::<f64>() / series.len().max(1) as f64;
            let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / series.len().max(1) as f64;
            if var > best {
                best = var;
                channel = c;
            }
        }
        let y_max = y_std.iter().map(|v| v[channel]).collect();
        Self { dt, t0, y, y_std, y_max_channel: channel, y_max }
    }

    pub fn len(&self) -> usize {
        self.y_max.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_max.is_empty()
    }
}

/// Filter tuning for generator DSE. Defaults follow the artifact-wide
/// choices: unit spread (alpha = 1, beta = 2, kappa = 0), soft process noise
/// on the voltage-like states and a stiffer one on the speed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DseOptions {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub q_diag: [f64; 6],
    /// measurement noise variances for `[V_re, V_im, f]`
    pub r_diag: [f64; 3],
    pub reg_floor: f64,
    /// use the PMU frequency channel as a third measurement: the angle
    /// advance integrated from the measured frequency over `angle_window_s`
    /// is compared against the predicted voltage-angle advance
    pub freq_channel: bool,
    /// horizon of the angle-consistency measurement, seconds
    pub angle_window_s: f64,
    /// variance floor for the angle-increment channel (prediction-side
    /// reference uncertainty), rad^2
    pub r_theta_floor: f64,
    /// projection bound on the speed-deviation state
    pub omega_bound: f64,
    /// optional clamp on the recovered field voltage
    pub efd_bounds: Option<(f64, f64)>,
    pub pmech_bounds: Option<(f64, f64)>,
    /// initial covariance: (frac * max(|x0|, floor))^2 per state
    pub p0_frac: f64,
    pub p0_floor: f64,
    /// random-walk (slew) standard deviation of `[P_mech, E_fd]` per second
    /// of filter step; the FO band is far below the reporting rate, so
    /// consecutive inputs stay close
    pub input_rw_per_s: [f64; 2],
    /// zero-phase moving-average window for the reported unknown-input
    /// series (the raw per-step least-squares estimates stay in `d_hat`)
    pub output_smooth_s: f64,
}

impl Default for DseOptions {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            kappa: 0.0,
            q_diag: [1e-10, 1e-8, 1e-10, 1e-10, 1e-10, 1e-10],
            r_diag: [1e-8, 1e-8, 1.2e-8],
            reg_floor: 1e-10,
            freq_channel: true,
            angle_window_s: 0.5,
            r_theta_floor: 1e-9,
            omega_bound: 0.2,
            efd_bounds: Some((0.0, 5.0)),
            pmech_bounds: Some((-0.5, 1.5)),
            p0_frac: 0.03,
            p0_floor: 0.1,
            input_rw_per_s: [10.0, 10.0],
            output_smooth_s: 0.2,
        }
    }
}

impl DseOptions {
    pub fn filter_config(&self, params: &GenrouParams, dt: f64) -> FilterConfig {
        let q = DMatrix::from_diagonal(&DVector::from_row_slice(&self.q_diag));
        let m = if self.freq_channel { 3 } else { 2 };
        let mut r_diag = self.r_diag;
        if self.freq_channel {
            r_diag[2] += self.r_theta_floor;
        }
        let r = DMatrix::from_diagonal(&DVector::from_row_slice(&r_diag[..m]));
        let mut cfg = FilterConfig::new(q, r);
        cfg.alpha = self.alpha;
        cfg.beta = self.beta;
        cfg.kappa = self.kappa;
        cfg.reg_floor = self.reg_floor;
        // d = [P_mech, E_fd] enters the speed and field-voltage equations.
        // The discrete distribution matrix keeps the O(dt^2) chain terms:
        // without the angle row the mechanical input cannot reach the
        // voltage measurement within one step and H G drops rank.
        let mut g = DMatrix::zeros(6, 2);
        g[(0, 0)] = params.omega_base() * dt * dt / (4.0 * params.h);
        g[(1, 0)] = dt / (2.0 * params.h);
        g[(3, 1)] = dt / params.td0_p;
        g[(4, 1)] = dt * dt / (2.0 * params.td0_p * params.td0_pp);
        cfg.g = g;
        cfg.state_bounds = vec![
            None,
            Some((-self.omega_bound, self.omega_bound)),
            None,
            None,
            None,
            None,
        ];
        cfg.input_bounds = vec![self.pmech_bounds, self.efd_bounds];
        cfg.input_prior_var = self.input_rw_per_s.iter().map(|s| (s * dt) * (s * dt)).collect();
        cfg
    }
}

/// State and unknown-input trajectories of one DSE run. `d_hat[k]` is the
/// input recovered for the step from measurement `k-1` to `k`, so it sits
/// half a step before `time[k]`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DseResult {
    pub dt: f64,
    pub time: Vec<f64>,
    pub x_hat: Vec<[f64; 6]>,
    pub p_diag: Vec<[f64; 6]>,
    /// recovered `[P_mech, E_fd]` per step
    pub d_hat: Vec<[f64; 2]>,
    pub residual: ResidualRecord,
}

impl DseResult {
    pub fn efd_series(&self) -> Vec<f64> {
        self.d_hat.iter().map(|d| d[1]).collect()
    }

    pub fn pmech_series(&self) -> Vec<f64> {
        self.d_hat.iter().map(|d| d[0]).collect()
    }

    pub fn delta_series(&self) -> Vec<f64> {
        self.x_hat.iter().map(|x| x[0]).collect()
    }

    pub fn efd_series_smooth(&self, window_s: f64) -> Vec<f64> {
        zero_phase_ma(&self.efd_series(), (window_s / self.dt).round() as usize)
    }

    pub fn pmech_series_smooth(&self, window_s: f64) -> Vec<f64> {
        zero_phase_ma(&self.pmech_series(), (window_s / self.dt).round() as usize)
    }
}

/// Centered moving average with symmetric edge truncation; phase-free, so
/// safe on series that feed trend fits.
pub fn zero_phase_ma(series: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 || series.is_empty() {
        return series.to_vec();
    }
    let half = window / 2;
    (0..series.len())
        .map(|k| {
            let side = half.min(k).min(series.len() - 1 - k);
            let (lo, hi) = (k - side, k + side);
            series[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}


fn rk4_transition(
    state: &[f64],
    e_fd: f64,
    p_mech: f64,
    i_from: Phasor,
    i_to: Phasor,
    dt: f64,
    params: &GenrouParams,
) -> DVector<f64> {
    // the injection is interpolated linearly across the step and the
    // integration is substepped so the damper time constants stay resolved
    // at reporting-rate filter steps
    let eval = |s: &MachineState, frac: f64| {
        let i = i_from * (1.0 - frac) + i_to * frac;
        let (i_d, i_q) = network_to_dq(i.re, i.im, s.delta);
        let (d, _) = genrou_derivatives_at_current(s, e_fd, p_mech, i_d, i_q, params);
        d
    };
    let n_sub = (dt / 0.01).ceil().max(1.0) as usize;
    let h = dt / n_sub as f64;
    let mut cur = [0.0; 6];
    cur.copy_from_slice(state);
    for sub in 0..n_sub {
        let frac0 = sub as f64 / n_sub as f64;
        let frac_h = |f: f64| frac0 + f / n_sub as f64;
        let s0 = MachineState::from_array(&cur);
        let k1 = eval(&s0, frac_h(0.0));
        let at = |k: &[f64; 6], f: f64| {
            let mut v = [0.0; 6];
            for i in 0..6 {
                v[i] = cur[i] + f * k[i];
            }
            MachineState::from_array(&v)
        };
        let k2 = eval(&at(&k1, h / 2.0), frac_h(0.5));
        let k3 = eval(&at(&k2, h / 2.0), frac_h(0.5));
        let k4 = eval(&at(&k3, h), frac_h(1.0));
        for i in 0..6 {
            cur[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    DVector::from_row_slice(&cur)
}

fn predicted_voltage(state: &[f64], i_re: f64, i_im: f64, params: &GenrouParams) -> (f64, f64) {
    let s = MachineState::from_array(state);
    let (i_d, i_q) = network_to_dq(i_re, i_im, s.delta);
    let (psi_d_pp, psi_q_pp) = crate::models::subtransient_flux_of(&s, params);
    let v_q = psi_d_pp - params.xd_pp * i_d;
    let v_d = -psi_q_pp + params.xq_pp * i_q;
    crate::models::dq_to_network(v_d, v_q, s.delta)
}

/// Measurement prediction. With the angle channel on, the third row is the
/// predicted voltage-angle advance since a reference instant a fraction of a
/// second back, to be compared against the advance integrated from the PMU
/// frequency channel. Frequency estimates are far more precise than
/// differencing noisy phasor angles, so this pins the rotation: a
/// wrong-hypothesis filter cannot explain its current mismatch away with
/// phantom mechanical-power wiggles without breaking angle consistency.
fn measure(
    state: &[f64],
    i_re: f64,
    i_im: f64,
    theta_ref: Option<f64>,
    params: &GenrouParams,
) -> DVector<f64> {
    let (v_re, v_im) = predicted_voltage(state, i_re, i_im, params);
    match theta_ref {
        None => DVector::from_vec(vec![v_re, v_im]),
        Some(reference) => {
            // unwrap the prediction against the reference so the increment
            // is continuous
            let theta = v_im.atan2(v_re);
            let mut dth = theta - reference;
            while dth > std::f64::consts::PI {
                dth -= 2.0 * std::f64::consts::PI;
            }
            while dth < -std::f64::consts::PI {
                dth += 2.0 * std::f64::consts::PI;
            }
            DVector::from_vec(vec![v_re, v_im, dth])
        }
    }
}

/// Run the unknown-input filter for one generator hypothesis over a
/// measurement trace. `currents` is the generator's injection on the system
/// base (true or playback-reconstructed); the measured bus voltage is the
/// measurement vector. Controller dynamics are deliberately absent from the
/// transition: the field voltage and mechanical power are recovered as
/// unknown inputs instead.
pub fn dse_generator(
    params: &GenrouParams,
    trace: &PhasorTrace,
    currents: &[Phasor],
    s_base: f64,
    init: &MachineState,
    opts: &DseOptions,
) -> Result<DseResult, FilterError> {
    if currents.len() != trace.len() {
        return Err(FilterError::Misaligned(format!(
            "current trace has {} samples, measurements {}",
            currents.len(),
            trace.len()
        )));
    }
    if trace.len() < 2 {
        return Err(FilterError::Misaligned("need at least two measurement samples".into()));
    }
    let dt = trace.dt;
    let cfg = opts.filter_config(params, dt);
    cfg.validate()?;
    let to_machine = s_base / params.mva_base;

    let x0 = DVector::from_row_slice(&init.to_array());
    let p0 = DMatrix::from_diagonal(&DVector::from_fn(6, |i, _| {
        let s = opts.p0_frac * x0[i].abs().max(opts.p0_floor);
        s * s
    }));
    let mut st = FilterState::new(x0.clone(), p0, &cfg);
    // anchor the input prior at the dispatch equilibrium implied by the
    // initial state and first current sample
    {
        let i0 = currents[0] * to_machine;
        let (i_d, i_q) = network_to_dq(i0.re, i0.im, init.delta);
        let (_, out) = genrou_derivatives_at_current(init, 0.0, 0.0, i_d, i_q, params);
        st.d_hat[0] = out.p_e;
        st.d_hat[1] = out.xad_ifd;
    }

    let n = trace.len();
    let mut result = DseResult {
        dt,
        time: Vec::with_capacity(n),
        x_hat: Vec::with_capacity(n),
        p_diag: Vec::with_capacity(n),
        d_hat: Vec::with_capacity(n),
        residual: ResidualRecord::default(),
    };
    let mut innovations: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut innovations_std: Vec<Vec<f64>> = Vec::with_capacity(n);

    let push = |res: &mut DseResult, st: &FilterState, t: f64| {
        let mut x = [0.0; 6];
        let mut pd = [0.0; 6];
        let mut d = [0.0; 2];
        for i in 0..6 {
            x[i] = st.x[i];
            pd[i] = st.p[(i, i)];
        }
        d[0] = st.d_hat[0];
        d[1] = st.d_hat[1];
        res.time.push(t);
        res.x_hat.push(x);
        res.p_diag.push(pd);
        res.d_hat.push(d);
    };
    push(&mut result, &st, trace.t0);
    let m = cfg.m();
    innovations.push(vec![0.0; m]);
    innovations_std.push(vec![0.0; m]);

    let f_nominal = if trace.meta.f_nominal_hz > 0.0 { trace.meta.f_nominal_hz } else { params.freq_base };
    let lag = ((opts.angle_window_s / dt).round() as usize).max(1);
    // unwrapped posterior voltage angles, the references for the
    // angle-increment channel
    let mut theta_post: Vec<f64> = Vec::with_capacity(n);
    if opts.freq_channel {
        let i0 = currents[0] * to_machine;
        let (v_re, v_im) = predicted_voltage(&init.to_array(), i0.re, i0.im, params);
        theta_post.push(v_im.atan2(v_re));
    }

    for k in 1..n {
        let u_prev = currents[k - 1] * to_machine;
        let u_now = currents[k] * to_machine;
        let (z, theta_ref) = if opts.freq_channel {
            let back = lag.min(k);
            // angle advance integrated from the measured frequency
            let mut advance = 0.0;
            for j in (k - back + 1)..=k {
                advance += 2.0 * std::f64::consts::PI * (trace.freq[j] - f_nominal) * dt;
            }
            let z = DVector::from_vec(vec![trace.v[k].re, trace.v[k].im, advance]);
            (z, Some(theta_post[k - back]))
        } else {
            (DVector::from_vec(vec![trace.v[k].re, trace.v[k].im]), None)
        };
        let fs = |x: &DVector<f64>, d: &DVector<f64>| {
            rk4_transition(x.as_slice(), d[1], d[0], u_prev, u_now, dt, params)
        };
        let hs = |x: &DVector<f64>| measure(x.as_slice(), u_now.re, u_now.im, theta_ref, params);
        st = ukfui_step_param(fs, hs, &st, &z, &cfg, 2)?;
        if opts.freq_channel {
            let (v_re, v_im) = predicted_voltage(st.x.as_slice(), u_now.re, u_now.im, params);
            let raw = v_im.atan2(v_re);
            let prev = *theta_post.last().unwrap();
            let mut dth = raw - prev;
            while dth > std::f64::consts::PI {
                dth -= 2.0 * std::f64::consts::PI;
            }
            while dth < -std::f64::consts::PI {
                dth += 2.0 * std::f64::consts::PI;
            }
            theta_post.push(prev + dth);
        }
        push(&mut result, &st, trace.time(k));
        innovations.push(st.y.as_slice().to_vec());
        innovations_std.push(st.y_std.as_slice().to_vec());
    }

    result.residual = ResidualRecord::from_innovations(dt, trace.t0, innovations, innovations_std);
    Ok(result)
}

/// Deterministically perturb each state component by up to `frac` of its
/// magnitude (SCADA-style initialization error for tests and scenarios).
pub fn perturb_state(state: &MachineState, frac: f64, seed: u64) -> MachineState {
    let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let mut jitter = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let mut arr = state.to_array();
    for v in arr.iter_mut() {
        let scale = v.abs().max(0.05);
        *v += frac * scale * jitter();
    }
    MachineState::from_array(&arr)
}
