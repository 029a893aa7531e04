use nalgebra::{DMatrix, DVector};

use super::{repair_psd, FilterConfig, FilterError};

/// The 2n+1 symmetric sigma points with their mean and covariance weights.
#[derive(Debug, Clone)]
pub struct SigmaSet {
    pub points: Vec<DVector<f64>>,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
}

impl SigmaSet {
    /// Weighted mean of a transformed point set.
    pub fn mean_of(&self, transformed: &[DVector<f64>]) -> DVector<f64> {
        let mut mean = DVector::zeros(transformed[0].len());
        for (w, p) in self.wm.iter().zip(transformed) {
            mean.axpy(*w, p, 1.0);
        }
        mean
    }

    /// Weighted covariance of a transformed set about `mean`.
    pub fn cov_of(&self, transformed: &[DVector<f64>], mean: &DVector<f64>) -> DMatrix<f64> {
        let d = mean.len();
        let mut cov = DMatrix::zeros(d, d);
        for (w, p) in self.wc.iter().zip(transformed) {
            let diff = p - mean;
            cov.ger(*w, &diff, &diff, 1.0);
        }
        (cov.clone() + cov.transpose()) * 0.5
    }

    /// Weighted cross-covariance between this set (about `x_mean`) and a
    /// transformed set (about `z_mean`).
    pub fn cross_cov(
        &self,
        x_mean: &DVector<f64>,
        transformed: &[DVector<f64>],
        z_mean: &DVector<f64>,
    ) -> DMatrix<f64> {
        let mut cov = DMatrix::zeros(x_mean.len(), z_mean.len());
        for ((w, x), z) in self.wc.iter().zip(&self.points).zip(transformed) {
            let dx = x - x_mean;
            let dz = z - z_mean;
            cov.ger(*w, &dx, &dz, 1.0);
        }
        cov
    }
}

/// Generate the symmetric sigma-point set for `(x, p)`. The covariance is
/// symmetrized and eigenvalue-repaired before the Cholesky square root;
/// components with projection bounds are clamped after generation, which
/// never increases a constraint violation.
pub fn sigma_points(
    x: &DVector<f64>,
    p: &DMatrix<f64>,
    cfg: &FilterConfig,
) -> Result<SigmaSet, FilterError> {
    let n = x.len();
    let nf = n as f64;
    let lambda = cfg.alpha * cfg.alpha * (nf + cfg.kappa) - nf;
    let scale = nf + lambda;
    if scale <= 0.0 {
        return Err(FilterError::Dimension(format!(
            "alpha^2 (n + kappa) = {scale} must be positive"
        )));
    }

    let repaired = repair_psd(p, cfg.reg_floor);
    let chol = match repaired.clone().cholesky() {
        Some(c) => c,
        None => {
            let eig = repaired.symmetric_eigen();
            let min_eig = eig.eigenvalues.min();
            let max_eig = eig.eigenvalues.max();
            return Err(FilterError::SqrtFailed { min_eig, max_eig });
        }
    };
    let root = chol.l() * scale.sqrt();

    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(x.clone());
    for j in 0..n {
        let col = root.column(j);
        points.push(x + &col);
        points.push(x - &col);
    }
    if !cfg.state_bounds.is_empty() {
        for pt in points.iter_mut() {
            for (i, b) in cfg.state_bounds.iter().enumerate() {
                if let Some((lo, hi)) = b {
                    pt[i] = pt[i].clamp(*lo, *hi);
                }
            }
        }
    }

    let w0m = lambda / scale;
    let w0c = w0m + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
    let wi = 0.5 / scale;
    let mut wm = vec![wi; 2 * n + 1];
    let mut wc = vec![wi; 2 * n + 1];
    wm[0] = w0m;
    wc[0] = w0c;

    Ok(SigmaSet { points, wm, wc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(n: usize) -> FilterConfig {
        FilterConfig::new(DMatrix::identity(n, n), DMatrix::identity(1, 1))
    }

    #[test]
    fn scalar_closed_form() {
        // n = 1, alpha = 1, kappa = 0: lambda = 0, points {0, +1, -1}
        let c = cfg(1);
        let s = sigma_points(&DVector::from_vec(vec![0.0]), &DMatrix::identity(1, 1), &c).unwrap();
        assert_eq!(s.points.len(), 3);
        assert_relative_eq!(s.points[0][0], 0.0);
        assert_relative_eq!(s.points[1][0], 1.0);
        assert_relative_eq!(s.points[2][0], -1.0);
        let wsum: f64 = s.wm.iter().sum();
        assert_relative_eq!(wsum, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn mean_and_covariance_round_trip() {
        // deterministic random-ish PSD matrix, n = 6
        let n = 6;
        let mut seed = 0x9E3779B97F4A7C15u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::from_fn(n, n, |_, _| next());
        let p = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
        let x = DVector::from_fn(n, |i, _| 0.3 * i as f64 - 1.0);
        let c = cfg(n);
        let s = sigma_points(&x, &p, &c).unwrap();
        let mean = s.mean_of(&s.points);
        let cov = s.cov_of(&s.points, &mean);
        assert!((mean - &x).amax() < 1e-10, "sigma mean must reproduce x");
        assert!((cov - &p).amax() < 1e-10, "sigma covariance must reproduce P");
    }

    #[test]
    fn bounds_clamp_every_component() {
        let n = 3;
        let mut c = cfg(n);
        c.state_bounds = vec![None, Some((-0.2, 0.2)), Some((0.0, 1.0))];
        let x = DVector::from_vec(vec![0.0, 0.19, 0.95]);
        let p = DMatrix::identity(n, n) * 4.0;
        let s = sigma_points(&x, &p, &c).unwrap();
        for pt in &s.points {
            assert!(pt[1] >= -0.2 && pt[1] <= 0.2);
            assert!(pt[2] >= 0.0 && pt[2] <= 1.0);
        }
    }

    #[test]
    fn repairs_indefinite_covariance() {
        let mut p = DMatrix::identity(2, 2);
        p[(0, 0)] = -1e-12; // slightly indefinite
        let c = cfg(2);
        let s = sigma_points(&DVector::zeros(2), &p, &c).unwrap();
        assert_eq!(s.points.len(), 5);
        for pt in &s.points {
            assert!(pt.iter().all(|v| v.is_finite()));
        }
    }
}
