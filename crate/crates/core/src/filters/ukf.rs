use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{solve_symmetric, symmetrize, GaussianBelief, MeasurementModel, ProcessModel};
use crate::error::{Error, Result};

/// Sigma-point placement.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaScheme {
    /// `x̂ ± columns of chol(n P)`, 2n points with weight 1/(2n) each.
    #[default]
    EqualWeight,
    /// Scaled transform with a centre point (α, β, κ).
    Scaled { alpha: f64, beta: f64, kappa: f64 },
}

#[derive(Debug, Clone)]
pub struct SigmaPoints {
    pub points: Vec<DVector<f64>>,
    /// Weights for the mean.
    pub wm: Vec<f64>,
    /// Weights for covariances.
    pub wc: Vec<f64>,
}

impl SigmaPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn with_points(&self, points: Vec<DVector<f64>>) -> SigmaPoints {
        SigmaPoints {
            points,
            wm: self.wm.clone(),
            wc: self.wc.clone(),
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.points[0].len());
        for (w, p) in self.wm.iter().zip(&self.points) {
            m.axpy(*w, p, 1.0);
        }
        m
    }

    /// Weighted cross scatter `Σ w (a_i − a_mean)(b_i − b_mean)ᵀ`.
    fn cross(&self, a_mean: &DVector<f64>, other: &SigmaPoints, b_mean: &DVector<f64>) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(a_mean.len(), b_mean.len());
        for ((w, a), b) in self.wc.iter().zip(&self.points).zip(&other.points) {
            let da = a - a_mean;
            let db = b - b_mean;
            s.ger(*w, &da, &db, 1.0);
        }
        s
    }
}

/// Lower factor of `scale · P`, retrying once with `jitter · I` added to `P`.
fn scaled_factor(p: &DMatrix<f64>, scale: f64, jitter: f64) -> Result<DMatrix<f64>> {
    if let Some(c) = (p * scale).cholesky() {
        return Ok(c.l());
    }
    let n = p.nrows();
    if jitter > 0.0 {
        if let Some(c) = ((p + DMatrix::identity(n, n) * jitter) * scale).cholesky() {
            return Ok(c.l());
        }
    }
    Err(Error::Factorization { jitter })
}

pub fn sigma_points(b: &GaussianBelief, scheme: SigmaScheme, jitter: f64) -> Result<SigmaPoints> {
    let n = b.dim();
    if n == 0 {
        return Err(Error::Dimension("empty state".into()));
    }
    let nf = n as f64;
    match scheme {
        SigmaScheme::EqualWeight => {
            let l = scaled_factor(&b.p, nf, jitter)?;
            let mut points = Vec::with_capacity(2 * n);
            for i in 0..n {
                points.push(&b.x_hat + l.column(i));
            }
            for i in 0..n {
                points.push(&b.x_hat - l.column(i));
            }
            let w = vec![1.0 / (2.0 * nf); 2 * n];
            Ok(SigmaPoints {
                points,
                wm: w.clone(),
                wc: w,
            })
        }
        SigmaScheme::Scaled { alpha, beta, kappa } => {
            let lambda = alpha * alpha * (nf + kappa) - nf;
            let l = scaled_factor(&b.p, nf + lambda, jitter)?;
            let mut points = Vec::with_capacity(2 * n + 1);
            points.push(b.x_hat.clone());
            for i in 0..n {
                points.push(&b.x_hat + l.column(i));
            }
            for i in 0..n {
                points.push(&b.x_hat - l.column(i));
            }
            let wi = 1.0 / (2.0 * (nf + lambda));
            let mut wm = vec![wi; 2 * n + 1];
            let mut wc = wm.clone();
            wm[0] = lambda / (nf + lambda);
            wc[0] = wm[0] + 1.0 - alpha * alpha + beta;
            Ok(SigmaPoints { points, wm, wc })
        }
    }
}

/// Time update. Returns the predicted belief and the propagated points.
pub fn ukf_predict(
    b: &GaussianBelief,
    model: &impl ProcessModel,
    q: &DMatrix<f64>,
    scheme: SigmaScheme,
    jitter: f64,
) -> Result<(GaussianBelief, SigmaPoints)> {
    let sigma = sigma_points(b, scheme, jitter)?;
    let propagated = sigma.with_points(sigma.points.iter().map(|x| model.propagate(x)).collect());
    let x_hat = propagated.mean();
    let mut p = propagated.cross(&x_hat, &propagated, &x_hat) + q;
    symmetrize(&mut p);
    Ok((GaussianBelief { x_hat, p }, propagated))
}

/// Measurement update on freshly drawn points around `(x̂⁻, P⁻)`.
pub fn ukf_update(
    b: &GaussianBelief,
    z: &DVector<f64>,
    model: &impl MeasurementModel,
    r: &DMatrix<f64>,
    scheme: SigmaScheme,
    jitter: f64,
) -> Result<GaussianBelief> {
    let sigma = sigma_points(b, scheme, jitter)?;
    let observed = sigma.with_points(
        sigma
            .points
            .iter()
            .map(|x| model.observe(x))
            .collect::<Result<Vec<_>>>()?,
    );
    let z_hat = observed.mean();
    if z.len() != z_hat.len() || r.shape() != (z.len(), z.len()) {
        return Err(Error::Dimension(format!(
            "measurement has {} entries, model predicts {}, R is {:?}",
            z.len(),
            z_hat.len(),
            r.shape()
        )));
    }
    let x_mean = sigma.mean();
    let mut p_z = observed.cross(&z_hat, &observed, &z_hat) + r;
    symmetrize(&mut p_z);
    let p_xz = sigma.cross(&x_mean, &observed, &z_hat);
    // Kᵀ = P_z⁻¹ P_xzᵀ
    let k = solve_symmetric(&p_z, &p_xz.transpose(), "predicted measurement covariance")?.transpose();
    let x_hat = &b.x_hat + &k * (z - z_hat);
    let mut p = &b.p - &k * &p_z * k.transpose();
    symmetrize(&mut p);
    Ok(GaussianBelief { x_hat, p })
}
