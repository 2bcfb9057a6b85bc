use nalgebra::{DMatrix, DVector};

use super::{solve_symmetric, symmetrize, GaussianBelief, MeasurementModel, ProcessModel};
use crate::error::{Error, Result};

/// Time update: `x⁻ = f(x⁺)`, `P⁻ = F P⁺ Fᵀ + Q`.
pub fn ekf_predict(b: &GaussianBelief, model: &impl ProcessModel, q: &DMatrix<f64>) -> GaussianBelief {
    let f = model.jacobian(&b.x_hat);
    let mut p = &f * &b.p * f.transpose() + q;
    symmetrize(&mut p);
    GaussianBelief {
        x_hat: model.propagate(&b.x_hat),
        p,
    }
}

/// Measurement update with gain `K = P⁻Hᵀ(HP⁻Hᵀ + R)⁻¹` and `P⁺ = (I − KH)P⁻`.
pub fn ekf_update(
    b: &GaussianBelief,
    z: &DVector<f64>,
    model: &impl MeasurementModel,
    r: &DMatrix<f64>,
) -> Result<GaussianBelief> {
    let h = model.jacobian(&b.x_hat)?;
    let z_hat = model.observe(&b.x_hat)?;
    if z.len() != z_hat.len() || r.shape() != (z.len(), z.len()) {
        return Err(Error::Dimension(format!(
            "measurement has {} entries, model predicts {}, R is {:?}",
            z.len(),
            z_hat.len(),
            r.shape()
        )));
    }
    let hp = &h * &b.p;
    let mut s = &hp * h.transpose() + r;
    symmetrize(&mut s);
    // Kᵀ = S⁻¹ H P
    let k = solve_symmetric(&s, &hp, "innovation covariance")?.transpose();
    let x_hat = &b.x_hat + &k * (z - z_hat);
    let n = b.dim();
    let mut p = (DMatrix::identity(n, n) - &k * &h) * &b.p;
    symmetrize(&mut p);
    Ok(GaussianBelief { x_hat, p })
}
