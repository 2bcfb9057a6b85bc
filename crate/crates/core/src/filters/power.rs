//! Filters applied to the swing-equation process and phasor measurements.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    ekf_predict, ekf_update, init_belief, solve_symmetric, ukf_predict, ukf_update, GaussianBelief, JacobianMode,
    MeasurementModel, ProcessModel, SigmaScheme,
};
use crate::cases::NetworkCase;
use crate::dynamics::{step_process, DynamicState, FaultScenario, MachineParams, Study, Trajectory};
use crate::error::{Error, Result};
use crate::measurement::{measurement_jacobian, measurement_vector, MeasurementFrame, NoiseSpec};
use crate::powerflow::PowerFlowSolution;
use crate::reduction::ReducedNetwork;

pub const DEFAULT_JITTER: f64 = 1e-9;

/// Smallest measurement variance handed to a filter, so noiseless streams
/// still give an invertible innovation covariance.
pub const DEFAULT_R_FLOOR: f64 = 1e-10;

/// `∂f/∂x` of the Euler process step.
pub fn process_jacobian(x: &DynamicState, params: &MachineParams, net: &ReducedNetwork, dt: f64) -> DMatrix<f64> {
    let n = x.n_machines();
    let mut f = DMatrix::identity(2 * n, 2 * n);
    let e = &params.e_mag;
    for i in 0..n {
        f[(i, n + i)] = dt * params.omega0;
        let gain = dt / (2.0 * params.h[i]);
        let mut diag = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let a = x.delta[i] - x.delta[j] - net.y_ang[(i, j)];
            let dp = e[i] * e[j] * net.y_mag[(i, j)] * a.sin();
            f[(n + i, j)] = -gain * dp;
            diag -= dp;
        }
        f[(n + i, i)] = -gain * diag;
        f[(n + i, n + i)] = 1.0 - gain * params.d[i];
    }
    f
}

pub struct SwingModel<'a> {
    pub params: &'a MachineParams,
    pub net: &'a ReducedNetwork,
    pub dt: f64,
    pub mode: JacobianMode,
}

impl ProcessModel for SwingModel<'_> {
    fn propagate(&self, x: &DVector<f64>) -> DVector<f64> {
        step_process(&DynamicState::from_vector(x), self.params, self.net, self.dt, None).to_vector()
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self.mode {
            JacobianMode::Analytic => process_jacobian(&DynamicState::from_vector(x), self.params, self.net, self.dt),
            JacobianMode::FiniteDifference => super::finite_difference_jacobian(|v| self.propagate(v), x),
        }
    }
}

pub struct PhasorModel<'a> {
    pub params: &'a MachineParams,
    pub net: &'a ReducedNetwork,
    pub mode: JacobianMode,
}

impl MeasurementModel for PhasorModel<'_> {
    fn observe(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(measurement_vector(&DynamicState::from_vector(x), self.net, self.params))
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self.mode {
            JacobianMode::Analytic => measurement_jacobian(&DynamicState::from_vector(x), self.params, self.net),
            JacobianMode::FiniteDifference => {
                let f = |v: &DVector<f64>| measurement_vector(&DynamicState::from_vector(v), self.net, self.params);
                Ok(super::finite_difference_jacobian(f, x))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Ekf,
    Ukf,
}

impl FilterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Ekf => "ekf",
            FilterKind::Ukf => "ukf",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ekf" => Ok(FilterKind::Ekf),
            "ukf" => Ok(FilterKind::Ukf),
            other => Err(Error::InvalidArgument(format!("unknown filter '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub kind: FilterKind,
    /// Process covariance, `[δ; ω]` ordering.
    pub q: DMatrix<f64>,
    /// Measurement noise levels; the diagonal R is laid out per regime.
    pub noise: NoiseSpec,
    /// Lower bound applied to every diagonal entry of R.
    pub r_floor: f64,
    pub jitter: f64,
    pub jacobian_mode: JacobianMode,
    pub sigma_scheme: SigmaScheme,
}

impl FilterConfig {
    pub fn new(kind: FilterKind, n_machines: usize, noise: &NoiseSpec) -> Self {
        Self {
            kind,
            q: noise.process_covariance(n_machines),
            noise: noise.clone(),
            r_floor: DEFAULT_R_FLOOR,
            jitter: DEFAULT_JITTER,
            jacobian_mode: JacobianMode::Analytic,
            sigma_scheme: SigmaScheme::EqualWeight,
        }
    }

    pub fn measurement_covariance(&self, net: &ReducedNetwork) -> DMatrix<f64> {
        let mut r = self.noise.measurement_covariance(net);
        for i in 0..r.nrows() {
            r[(i, i)] = r[(i, i)].max(self.r_floor);
        }
        r
    }

    pub fn predict(&self, b: &GaussianBelief, params: &MachineParams, net: &ReducedNetwork, dt: f64) -> Result<GaussianBelief> {
        let model = SwingModel {
            params,
            net,
            dt,
            mode: self.jacobian_mode,
        };
        match self.kind {
            FilterKind::Ekf => Ok(ekf_predict(b, &model, &self.q)),
            FilterKind::Ukf => Ok(ukf_predict(b, &model, &self.q, self.sigma_scheme, self.jitter)?.0),
        }
    }

    pub fn update(
        &self,
        b: &GaussianBelief,
        z: &MeasurementFrame,
        params: &MachineParams,
        net: &ReducedNetwork,
    ) -> Result<GaussianBelief> {
        let model = PhasorModel {
            params,
            net,
            mode: self.jacobian_mode,
        };
        let z = z.to_vector();
        let r = self.measurement_covariance(net);
        match self.kind {
            FilterKind::Ekf => ekf_update(b, &z, &model, &r),
            FilterKind::Ukf => ukf_update(b, &z, &model, &r, self.sigma_scheme, self.jitter),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub estimates: Trajectory,
    /// Posterior belief after each frame.
    pub beliefs: Vec<GaussianBelief>,
}

/// Default prior: equilibrium with machine 1 displaced by `offset` rad and `P₀ = p0_scale · I`.
pub fn default_prior(study: &Study, offset: f64, p0_scale: f64) -> Result<GaussianBelief> {
    let mut x0 = study.equilibrium();
    if let Some(d) = x0.delta.first_mut() {
        *d += offset;
    }
    let n = 2 * x0.n_machines();
    init_belief(x0.to_vector(), DMatrix::identity(n, n) * p0_scale)
}

pub fn run_filter(
    cfg: &FilterConfig,
    case: &NetworkCase,
    pf: &PowerFlowSolution,
    scenario: &FaultScenario,
    frames: &[MeasurementFrame],
    b0: &GaussianBelief,
) -> Result<FilterRun> {
    let study = Study::prepare(case, pf, scenario)?;
    run_filter_on(cfg, &study, frames, b0)
}

/// Alternating predict/update over `frames`, the first frame being an update
/// of the prior. The regime network in force at the start of each interval
/// drives the prediction.
pub fn run_filter_on(cfg: &FilterConfig, study: &Study, frames: &[MeasurementFrame], b0: &GaussianBelief) -> Result<FilterRun> {
    let n = study.params.n_machines();
    if b0.dim() != 2 * n {
        return Err(Error::Dimension(format!("prior has {} states, case has {n} machines", b0.dim())));
    }
    let mut belief = b0.clone();
    let mut run = FilterRun {
        estimates: Trajectory {
            times: Vec::with_capacity(frames.len()),
            states: Vec::with_capacity(frames.len()),
            regime: Vec::with_capacity(frames.len()),
        },
        beliefs: Vec::with_capacity(frames.len()),
    };
    for (k, frame) in frames.iter().enumerate() {
        if k > 0 {
            let prev = frames[k - 1].t;
            let dt = frame.t - prev;
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument("frame times must increase".into()).at_frame(k));
            }
            belief = cfg
                .predict(&belief, &study.params, study.net_at(prev), dt)
                .map_err(|e| e.at_frame(k))?;
        }
        let net = study.net_at(frame.t);
        belief = cfg
            .update(&belief, frame, &study.params, net)
            .map_err(|e| e.at_frame(k))?;
        run.estimates.times.push(frame.t);
        run.estimates.states.push(DynamicState::from_vector(&belief.x_hat));
        run.estimates.regime.push(study.regime_at(frame.t));
        run.beliefs.push(belief.clone());
    }
    Ok(run)
}

/// Frame-by-frame weighted least-squares fit of rotor angles to each frame
/// alone, ignoring dynamics. Each fit is warm-started from the previous one.
pub fn static_inversion(study: &Study, frames: &[MeasurementFrame], noise: &NoiseSpec) -> Result<Vec<Vec<f64>>> {
    let n = study.params.n_machines();
    let mut delta = study.init.delta0.clone();
    let mut out = Vec::with_capacity(frames.len());
    for (k, frame) in frames.iter().enumerate() {
        let net = study.net_at(frame.t);
        let w = noise
            .measurement_covariance(net)
            .diagonal()
            .map(|v| if v > 0.0 { 1.0 / v } else { 1e12 });
        let z = frame.to_vector();
        for _ in 0..30 {
            let x = DynamicState::new(delta.clone(), vec![1.0; n]);
            let r = &z - measurement_vector(&x, net, &study.params);
            let h = measurement_jacobian(&x, &study.params, net)
                .map_err(|e| e.at_frame(k))?
                .columns(0, n)
                .into_owned();
            let hw = DMatrix::from_fn(h.nrows(), n, |i, j| h[(i, j)] * w[i]);
            let normal = hw.transpose() * &h;
            let rhs = hw.transpose() * DMatrix::from_column_slice(r.len(), 1, r.as_slice());
            let step = solve_symmetric(&normal, &rhs, "static normal equations").map_err(|e| e.at_frame(k))?;
            delta.iter_mut().zip(step.iter()).for_each(|(d, s)| *d += s);
            if step.amax() < 1e-12 {
                break;
            }
        }
        out.push(delta.clone());
    }
    Ok(out)
}
