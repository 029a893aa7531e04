//! Unscented Kalman filtering for generator dynamic state estimation:
//! the plain UKF, the constrained variant (sigma-point projection onto
//! per-state bounds), and the three-stage filter with unknown inputs that
//! recovers the field voltage and mechanical power without modeling the
//! controllers that produce them.

mod dse;
mod sigma;
mod ukf;
mod ukfui;

pub use dse::{dse_generator, perturb_state, DseOptions, DseResult, ResidualRecord};
pub use sigma::{sigma_points, SigmaSet};
pub use ukf::ukf_step;
pub use ukfui::{ukfui_step, ukfui_step_param};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("matrix square root failed after PSD repair: min eigenvalue {min_eig:.3e}, max {max_eig:.3e}")]
    SqrtFailed { min_eig: f64, max_eig: f64 },
    #[error("innovation covariance not invertible after regularization")]
    InnovationSingular,
    #[error("state covariance not invertible after regularization")]
    StateCovSingular,
    #[error("input unobservable: H_k G_k is rank deficient ({rank} < {p})")]
    InputUnobservable { rank: usize, p: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),
    #[error("timeline misalignment: {0}")]
    Misaligned(String),
}

/// Sigma-point spread, noise covariances, unknown-input distribution and
/// projection bounds for one filter instance.
#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// unknown-input distribution matrix (n x p); an all-zero or 0-column
    /// matrix means no unknown input and collapses the three-stage filter
    /// onto the plain UKF
    pub g: DMatrix<f64>,
    /// optional (lower, upper) projection bounds per state component
    pub state_bounds: Vec<Option<(f64, f64)>>,
    /// optional bounds on the unknown-input estimate
    pub input_bounds: Vec<Option<(f64, f64)>>,
    /// per-step random-walk variance anchoring the input estimate at its
    /// previous value; empty disables the prior and the least squares is
    /// memoryless
    pub input_prior_var: Vec<f64>,
    /// jitter floor for PSD repair and least-squares regularization
    pub reg_floor: f64,
}

impl FilterConfig {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Self {
        let n = q.nrows();
        Self {
            alpha: 1.0,
            beta: 2.0,
            kappa: 0.0,
            q,
            r,
            g: DMatrix::zeros(n, 0),
            state_bounds: Vec::new(),
            input_bounds: Vec::new(),
            input_prior_var: Vec::new(),
            reg_floor: 1e-10,
        }
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub fn p(&self) -> usize {
        self.g.ncols()
    }

    pub fn has_unknown_input(&self) -> bool {
        self.p() > 0 && self.g.iter().any(|v| *v != 0.0)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.q.nrows() != self.q.ncols() || self.r.nrows() != self.r.ncols() {
            return Err(FilterError::Dimension("Q and R must be square".into()));
        }
        if self.g.nrows() != self.n() && self.p() > 0 {
            return Err(FilterError::Dimension(format!(
                "G has {} rows for an n = {} state",
                self.g.nrows(),
                self.n()
            )));
        }
        if !self.state_bounds.is_empty() && self.state_bounds.len() != self.n() {
            return Err(FilterError::Dimension("state_bounds length != n".into()));
        }
        for b in self.state_bounds.iter().chain(self.input_bounds.iter()).flatten() {
            if !(b.0 < b.1) {
                return Err(FilterError::Dimension(format!("bound ({}, {}) has lower >= upper", b.0, b.1)));
            }
        }
        Ok(())
    }
}

/// Mean, covariance, last unknown-input estimate and innovation of a running
/// filter.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub d_hat: DVector<f64>,
    pub y: DVector<f64>,
    /// innovation divided by its predicted standard deviation, comparable
    /// across filters with different plant constants
    pub y_std: DVector<f64>,
}

impl FilterState {
    pub fn new(x: DVector<f64>, p: DMatrix<f64>, cfg: &FilterConfig) -> Self {
        Self {
            x,
            p,
            d_hat: DVector::zeros(cfg.p()),
            y: DVector::zeros(cfg.m()),
            y_std: DVector::zeros(cfg.m()),
        }
    }
}

/// Symmetrize and, if needed, lift negative eigenvalues to `floor`.
pub(crate) fn repair_psd(p: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (p + p.transpose()) * 0.5;
    if sym.clone().cholesky().is_some() {
        return sym;
    }
    let eig = sym.clone().symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < floor {
            *v = floor;
        }
    }
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (rebuilt.clone() + rebuilt.transpose()) * 0.5
}

/// Solve `A X = B` for symmetric positive-definite `A` with escalating
/// jitter, used for the Kalman gain and the H-matrix linearization.
pub(crate) fn spd_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    floor: f64,
) -> Option<DMatrix<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    if let Some(ch) = sym.clone().cholesky() {
        return Some(ch.solve(b));
    }
    let n = sym.nrows();
    let mut jitter = floor.max(1e-300);
    for _ in 0..8 {
        let bumped = &sym + DMatrix::identity(n, n) * jitter;
        if let Some(ch) = bumped.cholesky() {
            return Some(ch.solve(b));
        }
        jitter *= 100.0;
    }
    None
}
