//! Measurement model `h(x)` and synthetic noisy measurement streams.
//!
//! A frame carries machine active/reactive power and the magnitude and angle
//! of every network bus voltage that exists in the active regime. Buses
//! removed from the network (a grounded fault bus) are reported as absent.
//! The flattened vector layout is
//! `[P_G (n); Q_G (n); |V| (present buses); θ (present buses)]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{machine_powers, DynamicState, MachineParams, ScenarioNetworks, Trajectory};
use crate::error::{Error, Result};
use crate::reduction::ReducedNetwork;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub t: f64,
    pub p_g: Vec<f64>,
    pub q_g: Vec<f64>,
    pub v_mag: Vec<Option<f64>>,
    pub v_ang: Vec<Option<f64>>,
}

impl MeasurementFrame {
    /// Flattened measurement vector, absent entries skipped.
    pub fn to_vector(&self) -> DVector<f64> {
        let present = |v: &[Option<f64>]| v.iter().flatten().copied().collect::<Vec<_>>();
        let values: Vec<f64> = self
            .p_g
            .iter()
            .chain(&self.q_g)
            .copied()
            .chain(present(&self.v_mag))
            .chain(present(&self.v_ang))
            .collect();
        DVector::from_vec(values)
    }

    pub fn len(&self) -> usize {
        2 * self.p_g.len() + self.v_mag.iter().flatten().count() + self.v_ang.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub sigma_p: f64,
    pub sigma_q: f64,
    pub sigma_vmag: f64,
    pub sigma_vang: f64,
    /// Process-noise variance on each rotor angle.
    pub q_delta: f64,
    /// Process-noise variance on each rotor speed.
    pub q_omega: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_p: 0.01,
            sigma_q: 0.01,
            sigma_vmag: 0.005,
            sigma_vang: 0.005,
            q_delta: 1e-6,
            q_omega: 1e-6,
            seed: 42,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            sigma_p: 0.0,
            sigma_q: 0.0,
            sigma_vmag: 0.0,
            sigma_vang: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sigma_p,
            self.sigma_q,
            self.sigma_vmag,
            self.sigma_vang,
            self.q_delta,
            self.q_omega,
        ];
        if all.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("noise levels must be finite and non-negative".into()))
        }
    }

    /// Diagonal measurement covariance for the layout of `net`.
    pub fn measurement_covariance(&self, net: &ReducedNetwork) -> DMatrix<f64> {
        let n = net.n_machines();
        let nb = net.bus_order.len();
        let var = std::iter::repeat_n(self.sigma_p.powi(2), n)
            .chain(std::iter::repeat_n(self.sigma_q.powi(2), n))
            .chain(std::iter::repeat_n(self.sigma_vmag.powi(2), nb))
            .chain(std::iter::repeat_n(self.sigma_vang.powi(2), nb));
        DMatrix::from_diagonal(&DVector::from_iterator(2 * n + 2 * nb, var))
    }

    /// Diagonal process covariance for `n` machines, `[δ; ω]` ordering.
    pub fn process_covariance(&self, n: usize) -> DMatrix<f64> {
        let var = std::iter::repeat_n(self.q_delta, n).chain(std::iter::repeat_n(self.q_omega, n));
        DMatrix::from_diagonal(&DVector::from_iterator(2 * n, var))
    }
}

fn internal_emfs(delta: &[f64], e_mag: &[f64]) -> DVector<Complex64> {
    DVector::from_iterator(
        delta.len(),
        delta.iter().zip(e_mag).map(|(&d, &e)| Complex64::from_polar(e, d)),
    )
}

/// Mean rotor angle, the reference about which bus angles are unwrapped.
fn angle_reference(delta: &[f64]) -> f64 {
    if delta.is_empty() {
        0.0
    } else {
        delta.iter().sum::<f64>() / delta.len() as f64
    }
}

/// Reconstructed bus phasors in `net.bus_order` order.
pub fn bus_voltages(delta: &[f64], e_mag: &[f64], net: &ReducedNetwork) -> DVector<Complex64> {
    &net.r_v * internal_emfs(delta, e_mag)
}

/// Noise-free measurement frame at state `x` (t = 0).
pub fn measure(x: &DynamicState, net: &ReducedNetwork, params: &MachineParams) -> MeasurementFrame {
    let (p_g, q_g) = machine_powers(&x.delta, &params.e_mag, net);
    let v = bus_voltages(&x.delta, &params.e_mag, net);
    let reference = angle_reference(&x.delta);
    let rot = Complex64::from_polar(1.0, -reference);
    let mut v_mag = vec![None; net.n_case_buses];
    let mut v_ang = vec![None; net.n_case_buses];
    for (row, &bus) in net.bus_order.iter().enumerate() {
        v_mag[bus] = Some(v[row].norm());
        v_ang[bus] = Some(reference + (v[row] * rot).arg());
    }
    MeasurementFrame {
        t: 0.0,
        p_g,
        q_g,
        v_mag,
        v_ang,
    }
}

/// Flattened `h(x)`.
pub fn measurement_vector(x: &DynamicState, net: &ReducedNetwork, params: &MachineParams) -> DVector<f64> {
    measure(x, net, params).to_vector()
}

/// `∂h/∂x`; all speed columns are zero.
pub fn measurement_jacobian(x: &DynamicState, params: &MachineParams, net: &ReducedNetwork) -> Result<DMatrix<f64>> {
    let n = x.n_machines();
    let nb = net.bus_order.len();
    let e = &params.e_mag;
    let mut jac = DMatrix::zeros(2 * n + 2 * nb, 2 * n);

    for i in 0..n {
        let (mut dp_ii, mut dq_ii) = (0.0, 0.0);
        for j in (0..n).filter(|&j| j != i) {
            let a = x.delta[i] - x.delta[j] - net.y_ang[(i, j)];
            let k = e[i] * e[j] * net.y_mag[(i, j)];
            jac[(i, j)] = k * a.sin();
            jac[(n + i, j)] = -k * a.cos();
            dp_ii -= k * a.sin();
            dq_ii += k * a.cos();
        }
        jac[(i, i)] = dp_ii;
        jac[(n + i, i)] = dq_ii;
    }

    let emf = internal_emfs(&x.delta, e);
    let v = &net.r_v * &emf;
    for b in 0..nb {
        let vb = v[b];
        let mag = vb.norm();
        if mag == 0.0 {
            return Err(Error::ZeroVoltage { bus: net.bus_order[b] });
        }
        for j in 0..n {
            let dv = Complex64::i() * net.r_v[(b, j)] * emf[j];
            jac[(2 * n + b, j)] = (vb.conj() * dv).re / mag;
            jac[(2 * n + nb + b, j)] = (dv / vb).im;
        }
    }
    Ok(jac)
}

/// Noisy frames along a trajectory, using the network of each sample's regime.
pub fn synthesize(
    traj: &Trajectory,
    nets: &ScenarioNetworks,
    params: &MachineParams,
    noise: &NoiseSpec,
) -> Result<Vec<MeasurementFrame>> {
    if traj.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut gauss = |sigma: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    };
    let frames = traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(&traj.regime)
        .map(|((&t, x), &regime)| {
            let mut f = measure(x, nets.get(regime), params);
            f.t = t;
            f.p_g.iter_mut().for_each(|v| *v += gauss(noise.sigma_p));
            f.q_g.iter_mut().for_each(|v| *v += gauss(noise.sigma_q));
            f.v_mag.iter_mut().flatten().for_each(|v| *v += gauss(noise.sigma_vmag));
            f.v_ang.iter_mut().flatten().for_each(|v| *v += gauss(noise.sigma_vang));
            f
        })
        .collect();
    Ok(frames)
}
