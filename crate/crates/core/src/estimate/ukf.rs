use nalgebra::{DMatrix, DVector};

use super::sigma::sigma_points;
use super::{repair_psd, spd_solve, FilterConfig, FilterError, FilterState};

/// Prediction for one step: propagate the sigma set through `fs`, then
/// redraw from the predicted moments for the measurement transform.
pub(crate) struct Prediction {
    pub x_pred: DVector<f64>,
    pub p_pred: DMatrix<f64>,
    pub z_pred: DVector<f64>,
    pub p_zz: DMatrix<f64>,
    pub p_xz: DMatrix<f64>,
}

pub(crate) fn predict<F, H>(
    fs: &F,
    hs: &H,
    state: &FilterState,
    cfg: &FilterConfig,
    extra: Option<&DVector<f64>>,
) -> Result<Prediction, FilterError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    H: Fn(&DVector<f64>) -> DVector<f64>,
{
    let sig = sigma_points(&state.x, &state.p, cfg)?;
    let propagated: Vec<DVector<f64>> = sig
        .points
        .iter()
        .map(|p| {
            let mut x = fs(p);
            if let Some(d) = extra {
                x += d;
            }
            x
        })
        .collect();
    let x_pred = sig.mean_of(&propagated);
    if x_pred.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::NonFinite("state prediction"));
    }
    let p_pred = repair_psd(&(sig.cov_of(&propagated, &x_pred) + &cfg.q), cfg.reg_floor);

    let sig2 = sigma_points(&x_pred, &p_pred, cfg)?;
    let measured: Vec<DVector<f64>> = sig2.points.iter().map(hs).collect();
    let z_pred = sig2.mean_of(&measured);
    if z_pred.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::NonFinite("measurement prediction"));
    }
    let p_zz = sig2.cov_of(&measured, &z_pred) + &cfg.r;
    let p_xz = sig2.cross_cov(&x_pred, &measured, &z_pred);
    Ok(Prediction { x_pred, p_pred, z_pred, p_zz, p_xz })
}

/// Innovation scaled by the predicted innovation standard deviations, for
/// floor-free comparison across filters with different machine constants.
pub(crate) fn standardized_innovation(pred: &Prediction, y: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(y.len(), |i, _| y[i] / pred.p_zz[(i, i)].sqrt().max(1e-300))
}

pub(crate) fn correct(
    pred: &Prediction,
    z: &DVector<f64>,
    cfg: &FilterConfig,
) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>), FilterError> {
    // K = P_xz P_zz^-1, via P_zz K^T = P_xz^T
    let kt = spd_solve(&pred.p_zz, &pred.p_xz.transpose(), cfg.reg_floor)
        .ok_or(FilterError::InnovationSingular)?;
    let k = kt.transpose();
    let y = z - &pred.z_pred;
    let x = &pred.x_pred + &k * &y;
    let p = repair_psd(&(&pred.p_pred - &k * &pred.p_zz * k.transpose()), cfg.reg_floor);
    Ok((x, p, y))
}

/// One standard unscented prediction + correction. `fs` maps a state to its
/// successor (inputs already captured), `hs` maps a state to the expected
/// measurement.
pub fn ukf_step<F, H>(
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
    if z.len() != cfg.m() {
        return Err(FilterError::Dimension(format!(
            "measurement has {} components, R is {}x{}",
            z.len(),
            cfg.m(),
            cfg.m()
        )));
    }
    let pred = predict(&fs, &hs, state, cfg, None)?;
    let (x, p, y) = correct(&pred, z, cfg)?;
    let y_std = standardized_innovation(&pred, &y);
    Ok(FilterState { x, p, d_hat: state.d_hat.clone(), y, y_std })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook linear Kalman filter, the oracle for the affine testbed.
    pub(crate) struct LinearKf {
        pub a: DMatrix<f64>,
        pub c: DMatrix<f64>,
        pub q: DMatrix<f64>,
        pub r: DMatrix<f64>,
    }

    impl LinearKf {
        pub fn step(
            &self,
            x: &DVector<f64>,
            p: &DMatrix<f64>,
            z: &DVector<f64>,
        ) -> (DVector<f64>, DMatrix<f64>) {
            let x_pred = &self.a * x;
            let p_pred = &self.a * p * self.a.transpose() + &self.q;
            let s = &self.c * &p_pred * self.c.transpose() + &self.r;
            let k = &p_pred * self.c.transpose() * s.try_inverse().expect("S invertible");
            let y = z - &self.c * &x_pred;
            let x_new = &x_pred + &k * y;
            let p_new = &p_pred - &k * &self.c * &p_pred;
            (x_new, ((p_new.clone() + p_new.transpose()) * 0.5))
        }
    }

    fn testbed() -> (DMatrix<f64>, DMatrix<f64>, FilterConfig) {
        // lightly damped rotational testbed, stable and observable
        let a = DMatrix::from_row_slice(4, 4, &[
            0.99, 0.10, 0.00, 0.00,
            -0.10, 0.99, 0.00, 0.00,
            0.00, 0.00, 0.95, 0.05,
            0.00, 0.00, 0.00, 0.90,
        ]);
        let c = DMatrix::from_row_slice(2, 4, &[
            1.0, 0.0, 0.5, 0.0,
            0.0, 1.0, 0.0, 0.2,
        ]);
        let q = DMatrix::identity(4, 4) * 1e-4;
        let r = DMatrix::identity(2, 2) * 1e-3;
        let cfg = FilterConfig::new(q, r);
        (a, c, cfg)
    }

    #[test]
    fn matches_linear_kalman_oracle() {
        let (a, c, cfg) = testbed();
        let oracle = LinearKf { a: a.clone(), c: c.clone(), q: cfg.q.clone(), r: cfg.r.clone() };

        let mut truth = DVector::from_vec(vec![1.0, 0.0, 0.5, -0.2]);
        let mut ukf = FilterState::new(DVector::zeros(4), DMatrix::identity(4, 4), &cfg);
        let mut kf_x = ukf.x.clone();
        let mut kf_p = ukf.p.clone();

        // deterministic pseudo-measurement noise
        let mut s = 12345u64;
        let mut noise = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.02
        };

        for _ in 0..200 {
            truth = &a * &truth;
            let z = &c * &truth + DVector::from_vec(vec![noise(), noise()]);
            ukf = ukf_step(|x| &a * x, |x| &c * x, &ukf, &z, &cfg).unwrap();
            let (nx, np) = oracle.step(&kf_x, &kf_p, &z);
            kf_x = nx;
            kf_p = np;
            assert!(
                (&ukf.x - &kf_x).amax() < 1e-8,
                "UKF diverged from the linear filter: {:3e}",
                (&ukf.x - &kf_x).amax()
            );
            assert!((&ukf.p - &kf_p).amax() < 1e-8);
        }
    }

    #[test]
    fn perfect_measurement_leaves_state_untouched() {
        let (a, c, cfg) = testbed();
        let x0 = DVector::from_vec(vec![0.4, -0.1, 0.2, 0.05]);
        let state = FilterState::new(x0.clone(), DMatrix::identity(4, 4) * 1e-2, &cfg);
        // measurement exactly equal to the prediction
        let z = &c * (&a * &x0);
        let next = ukf_step(|x| &a * x, |x| &c * x, &state, &z, &cfg).unwrap();
        assert!(next.y.amax() < 1e-12, "innovation must vanish");
        assert!((&next.x - &a * &x0).amax() < 1e-12, "correction must be a no-op");
    }

    #[test]
    fn covariance_contracts_without_process_noise() {
        let (a, c, mut cfg) = testbed();
        cfg.q *= 0.0;
        let mut truth = DVector::from_vec(vec![1.0, 0.0, 0.5, -0.2]);
        let mut st = FilterState::new(truth.clone(), DMatrix::identity(4, 4), &cfg);
        let mut prev_trace = st.p.trace();
        for _ in 0..100 {
            truth = &a * &truth;
            let z = &c * &truth;
            st = ukf_step(|x| &a * x, |x| &c * x, &st, &z, &cfg).unwrap();
            let tr = st.p.trace();
            assert!(tr <= prev_trace + 1e-12, "trace grew: {tr} > {prev_trace}");
            prev_trace = tr;
        }
    }

    #[test]
    fn unscented_transform_is_exact_on_affine_maps() {
        let (a, _, cfg) = testbed();
        let x0 = DVector::from_vec(vec![0.3, 1.0, -0.4, 0.2]);
        let p0 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.1, 0.2, 0.3]));
        let offset = DVector::from_vec(vec![0.1, -0.2, 0.0, 0.4]);
        let sig = sigma_points(&x0, &p0, &cfg).unwrap();
        let moved: Vec<DVector<f64>> = sig.points.iter().map(|p| &a * p + &offset).collect();
        let mean = sig.mean_of(&moved);
        let cov = sig.cov_of(&moved, &mean);
        let expect_mean = &a * &x0 + &offset;
        let expect_cov = &a * &p0 * a.transpose();
        assert!((mean - expect_mean).amax() < 1e-10);
        assert!((cov - expect_cov).amax() < 1e-10);
    }
}
