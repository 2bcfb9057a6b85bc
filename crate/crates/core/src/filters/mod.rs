//! Extended and unscented Kalman filters.
//!
//! The recursions are written against the [`ProcessModel`] and
//! [`MeasurementModel`] traits with additive noise; [`power`] binds them to
//! the swing-equation process and the phasor measurement model.

mod ekf;
pub mod power;
mod ukf;

pub use ekf::{ekf_predict, ekf_update};
pub use power::{
    default_prior, process_jacobian, run_filter, run_filter_on, static_inversion, FilterConfig, FilterKind,
    FilterRun, PhasorModel, SwingModel, DEFAULT_JITTER, DEFAULT_R_FLOOR,
};
pub use ukf::{sigma_points, ukf_predict, ukf_update, SigmaPoints, SigmaScheme};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry tolerance applied to user-supplied covariances.
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn dim(&self) -> usize {
        self.x_hat.len()
    }
}

/// Validates and stores an initial belief.
pub fn init_belief(x0: DVector<f64>, p0: DMatrix<f64>) -> Result<GaussianBelief> {
    let n = x0.len();
    if p0.shape() != (n, n) {
        return Err(Error::Dimension(format!("P0 is {:?}, state has {n} entries", p0.shape())));
    }
    let scale = p0.amax().max(1.0);
    let asym = (&p0 - p0.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::InvalidCovariance(format!("P0 asymmetric by {asym:e}")));
    }
    if n > 0 {
        let min_eig = p0.clone().symmetric_eigenvalues().min();
        if min_eig < -SYMMETRY_TOL * scale {
            return Err(Error::InvalidCovariance(format!("P0 indefinite (min eigenvalue {min_eig:e})")));
        }
    }
    Ok(GaussianBelief { x_hat: x0, p: p0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    #[default]
    Analytic,
    FiniteDifference,
}

/// `x_k = f(x_{k-1}) + w`.
pub trait ProcessModel {
    fn propagate(&self, x: &DVector<f64>) -> DVector<f64>;

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        finite_difference_jacobian(|v| self.propagate(v), x)
    }
}

/// `z_k = h(x_k) + v`.
pub trait MeasurementModel {
    fn observe(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let z0 = self.observe(x)?;
        let mut err = None;
        let jac = finite_difference_jacobian(
            |v| match self.observe(v) {
                Ok(z) => z,
                Err(e) => {
                    err.get_or_insert(e);
                    DVector::zeros(z0.len())
                }
            },
            x,
        );
        match err {
            Some(e) => Err(e),
            None => Ok(jac),
        }
    }
}

/// `x ↦ A x`.
#[derive(Debug, Clone)]
pub struct LinearProcess(pub DMatrix<f64>);

impl ProcessModel for LinearProcess {
    fn propagate(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.0.clone()
    }
}

/// `x ↦ C x`.
#[derive(Debug, Clone)]
pub struct LinearMeasurement(pub DMatrix<f64>);

impl MeasurementModel for LinearMeasurement {
    fn observe(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.0 * x)
    }

    fn jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.0.clone())
    }
}

/// Central differences with step `1e-6 · max(1, |x_j|)`.
pub fn finite_difference_jacobian(mut f: impl FnMut(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let mut cols = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += h;
        minus[j] -= h;
        cols.push((f(&plus) - f(&minus)) / (2.0 * h));
    }
    if cols.is_empty() {
        return DMatrix::zeros(f(x).len(), 0);
    }
    DMatrix::from_columns(&cols)
}

pub(crate) fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p += t;
    *p *= 0.5;
}

/// Solves `S X = B` for symmetric `S`, reporting a condition estimate when
/// `S` is numerically singular.
pub(crate) fn solve_symmetric(s: &DMatrix<f64>, b: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let singular = || {
        let eig = s.clone().symmetric_eigenvalues();
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), e| (lo.min(e.abs()), hi.max(e.abs())));
        Error::SingularMatrix {
            what,
            condition: if lo == 0.0 { f64::INFINITY } else { hi / lo },
        }
    };
    let x = match s.clone().cholesky() {
        Some(chol) => chol.solve(b),
        None => s.clone().lu().solve(b).ok_or_else(singular)?,
    };
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(singular())
    }
}
