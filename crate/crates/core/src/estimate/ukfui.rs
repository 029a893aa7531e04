use nalgebra::{DMatrix, DVector};

use super::ukf::{correct, predict, standardized_innovation};
use super::{spd_solve, FilterConfig, FilterError, FilterState};

/// One step of the three-stage filter with unknown inputs, for transition
/// functions parameterized directly by the input vector `d` (dimension `p`).
///
/// Stage 1 (biased estimation) runs the plain unscented prediction with the
/// unknown input set to zero. Stage 2 linearizes the measurement function
/// statistically, `H_k = (P_xz^b)^T (P_k^b)^-1`, linearizes the input map
/// about the current mean, and recovers the input by weighted least squares
/// against the biased innovation with noise covariance `H P^b H^T + R`.
/// Stage 3 re-propagates with the recovered input and applies the usual
/// gain correction.
pub fn ukfui_step_param<Fd, Hm>(
    fs: Fd,
    hs: Hm,
    state: &FilterState,
    z: &DVector<f64>,
    cfg: &FilterConfig,
    p_inputs: usize,
) -> Result<FilterState, FilterError>
where
    Fd: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    Hm: Fn(&DVector<f64>) -> DVector<f64>,
{
    if z.len() != cfg.m() {
        return Err(FilterError::Dimension(format!(
            "measurement has {} components, R is {}x{}",
            z.len(),
            cfg.m(),
            cfg.m()
        )));
    }
    let d_zero = DVector::zeros(p_inputs);
    let fs0 = |x: &DVector<f64>| fs(x, &d_zero);

    // stage 1: biased estimation, d = 0
    let biased = predict(&fs0, &hs, state, cfg, None)?;

    // input distribution about the mean: G column j = fs(x, e_j) - fs(x, 0)
    // (the input channels are affine, so a unit probe is exact and avoids
    // finite-difference cancellation)
    let n = state.x.len();
    let base = fs(&state.x, &d_zero);
    let mut g = DMatrix::zeros(n, p_inputs);
    for j in 0..p_inputs {
        let mut probe = DVector::zeros(p_inputs);
        probe[j] = 1.0;
        let moved = fs(&state.x, &probe);
        g.set_column(j, &(moved - &base));
    }
    if p_inputs == 0 || g.iter().all(|v| *v == 0.0) {
        // no effective input channel: the stages collapse onto the plain UKF
        let (x, p, y) = correct(&biased, z, cfg)?;
        let y_std = standardized_innovation(&biased, &y);
        return Ok(FilterState { x, p, d_hat: DVector::zeros(p_inputs), y, y_std });
    }

    // stage 2: unknown-input estimation
    // H_k = (P_xz^b)^T (P^b)^-1  <=>  P^b H^T = P_xz^b
    let ht = spd_solve(&biased.p_pred, &biased.p_xz, cfg.reg_floor)
        .ok_or(FilterError::StateCovSingular)?;
    let h = ht.transpose();
    let r_tilde = &h * &biased.p_pred * h.transpose() + &cfg.r;
    let f = &h * &g;

    // structural observability: rank of H G at a relative threshold,
    // separate from any later numerical conditioning failures
    let svd = f.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > 1e-8 * smax.max(1e-300)).count();
    if rank < p_inputs {
        return Err(FilterError::InputUnobservable { rank, p: p_inputs });
    }

    let z_tilde = z - &biased.z_pred;
    // weighted least squares: (F^T Rt^-1 F) d = F^T Rt^-1 z~
    let w_f = spd_solve(&r_tilde, &f, cfg.reg_floor).ok_or(FilterError::InnovationSingular)?;
    let w_z = spd_solve(
        &r_tilde,
        &DMatrix::from_column_slice(z_tilde.len(), 1, z_tilde.as_slice()),
        cfg.reg_floor,
    )
    .ok_or(FilterError::InnovationSingular)?;
    let mut normal = f.transpose() * w_f;
    let mut rhs = (f.transpose() * w_z).column(0).into_owned();
    if !cfg.input_prior_var.is_empty() {
        // random-walk prior about the previous estimate keeps the
        // ill-conditioned channels from ringing against the state feedback
        for j in 0..p_inputs {
            let var = cfg.input_prior_var.get(j).copied().unwrap_or(f64::INFINITY);
            if var.is_finite() && var > 0.0 {
                normal[(j, j)] += 1.0 / var;
                rhs[j] += state.d_hat[j] / var;
            }
        }
    }
    let mut d_hat = solve_regularized(&normal, &rhs, cfg.reg_floor)?;
    for (i, b) in cfg.input_bounds.iter().enumerate() {
        if let (Some((lo, hi)), Some(v)) = (b, d_hat.get_mut(i)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    // stage 3: unbiased estimation, re-propagating with the recovered input
    let fs_d = |x: &DVector<f64>| fs(x, &d_hat);
    let unbiased = predict(&fs_d, &hs, state, cfg, None)?;
    let (x, p, y) = correct(&unbiased, z, cfg)?;
    let y_std = standardized_innovation(&unbiased, &y);
    Ok(FilterState { x, p, d_hat, y, y_std })
}

/// Three-stage unknown-input step for the additive model
/// `x_k = fs(x_{k-1}) + G d_{k-1} + w`, with `G` taken from the filter
/// configuration.
pub fn ukfui_step<F, H>(
    fs: F,
    hs: H,
    state: &FilterState,
    z: &DVector<f64>,
    cfg: &FilterConfig,
) -> Result<FilterState, FilterError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    H: Fn(&DVector<f64>) -> DVector<f64>,
{
    if !cfg.has_unknown_input() {
        let pred = predict(&fs, &hs, state, cfg, None)?;
        let (x, p, y) = correct(&pred, z, cfg)?;
        let y_std = standardized_innovation(&pred, &y);
        return Ok(FilterState { x, p, d_hat: DVector::zeros(cfg.p()), y, y_std });
    }
    ukfui_step_param(|x, d| fs(x) + &cfg.g * d, hs, state, z, cfg, cfg.p())
}

/// Solve the (small, symmetric) normal equations with a singular-value floor.
fn solve_regularized(
    normal: &DMatrix<f64>,
    rhs: &DVector<f64>,
    floor: f64,
) -> Result<DVector<f64>, FilterError> {
    let svd = normal.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let mut inv_vals = svd.singular_values.clone();
    for v in inv_vals.iter_mut() {
        *v = if *v > floor * smax.max(1.0) { 1.0 / *v } else { 0.0 };
    }
    let u = svd.u.as_ref().ok_or(FilterError::InnovationSingular)?;
    let vt = svd.v_t.as_ref().ok_or(FilterError::InnovationSingular)?;
    let d = vt.transpose() * DMatrix::from_diagonal(&inv_vals) * u.transpose() * rhs;
    if d.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::NonFinite("unknown-input estimate"));
    }
    Ok(d)
}
