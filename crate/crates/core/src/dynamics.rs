//! Classical-model swing dynamics, the discrete process model and the
//! fault-scenario transient simulation.
//!
//! Speeds are per-unit (1.0 is synchronous) and angles are radians in the
//! synchronous frame, so
//!
//! ```text
//! dδ/dt = ω₀ (ω − 1)
//! dω/dt = (P_m − P_G − D (ω − 1)) / (2H)
//! ```

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cases::NetworkCase;
use crate::error::{Error, Result};
use crate::powerflow::PowerFlowSolution;
use crate::reduction::{self, MachineInit, ReducedNetwork};

/// Speed deviation beyond which a simulation is declared unstable.
pub const MAX_SPEED_DEVIATION: f64 = 0.2;
/// Tolerance used when comparing sample times against switching instants.
const EVENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicState {
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
}

impl DynamicState {
    pub fn new(delta: Vec<f64>, omega: Vec<f64>) -> Self {
        assert_eq!(delta.len(), omega.len());
        Self { delta, omega }
    }

    pub fn n_machines(&self) -> usize {
        self.delta.len()
    }

    /// Stacked `[δ; ω]`.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.delta.len(), self.delta.iter().chain(&self.omega).copied())
    }

    pub fn from_vector(x: &DVector<f64>) -> Self {
        let n = x.len() / 2;
        Self {
            delta: x.rows(0, n).iter().copied().collect(),
            omega: x.rows(n, n).iter().copied().collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.delta.iter().chain(&self.omega).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineParams {
    pub h: Vec<f64>,
    pub d: Vec<f64>,
    /// Synchronous speed (rad/s).
    pub omega0: f64,
    pub e_mag: Vec<f64>,
    pub p_mech: Vec<f64>,
}

impl MachineParams {
    pub fn new(case: &NetworkCase, init: &MachineInit) -> Self {
        Self {
            h: case.machines.iter().map(|m| m.h).collect(),
            d: case.machines.iter().map(|m| m.d).collect(),
            omega0: 2.0 * std::f64::consts::PI * case.frequency,
            e_mag: init.e_mag.clone(),
            p_mech: init.p_mech.clone(),
        }
    }

    pub fn n_machines(&self) -> usize {
        self.h.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    PreFault,
    FaultOn,
    PostFault,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::PreFault => "pre",
            Regime::FaultOn => "fault",
            Regime::PostFault => "post",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    pub fault_bus: usize,
    pub t_fault: f64,
    pub clearing_cycles: f64,
    pub cleared_line: (usize, usize),
    pub t_end: f64,
    pub dt: f64,
}

impl FaultScenario {
    pub fn validate(&self, case: &NetworkCase) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0) || !(self.t_fault > 0.0) {
            return bad("t_fault and t_end must be positive".into());
        }
        if !(self.clearing_cycles > 0.0) {
            return bad("clearing_cycles must be positive".into());
        }
        if case.bus_index(self.fault_bus).is_none() {
            return bad(format!("fault bus {} not in case", self.fault_bus));
        }
        let (a, b) = self.cleared_line;
        if !case.branches.iter().any(|br| br.connects(a, b)) {
            return bad(format!("cleared line {a}-{b} not in case"));
        }
        Ok(())
    }

    pub fn t_clear(&self, frequency: f64) -> f64 {
        self.t_fault + self.clearing_cycles / frequency
    }

    pub fn regime_at(&self, t: f64, frequency: f64) -> Regime {
        if t < self.t_fault - EVENT_EPS {
            Regime::PreFault
        } else if t < self.t_clear(frequency) - EVENT_EPS {
            Regime::FaultOn
        } else {
            Regime::PostFault
        }
    }

    /// Number of samples, including t = 0.
    pub fn n_samples(&self) -> usize {
        (self.t_end / self.dt).round() as usize + 1
    }

    pub fn sample_time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DynamicState>,
    pub regime: Vec<Regime>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Reduced networks for the three regimes of a fault scenario.
#[derive(Debug, Clone)]
pub struct ScenarioNetworks {
    pub pre: ReducedNetwork,
    pub fault: ReducedNetwork,
    pub post: ReducedNetwork,
}

impl ScenarioNetworks {
    pub fn get(&self, regime: Regime) -> &ReducedNetwork {
        match regime {
            Regime::PreFault => &self.pre,
            Regime::FaultOn => &self.fault,
            Regime::PostFault => &self.post,
        }
    }
}

/// Per-machine electrical power `P_Gi = E_i Σ_j |Y_ij| E_j cos(δ_i − δ_j − θ_ij)`.
pub fn electrical_power(delta: &[f64], e_mag: &[f64], net: &ReducedNetwork) -> Vec<f64> {
    machine_powers(delta, e_mag, net).0
}

/// Per-machine `(P_G, Q_G)`.
pub fn machine_powers(delta: &[f64], e_mag: &[f64], net: &ReducedNetwork) -> (Vec<f64>, Vec<f64>) {
    let n = delta.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let a = delta[i] - delta[j] - net.y_ang[(i, j)];
            let k = e_mag[i] * e_mag[j] * net.y_mag[(i, j)];
            p[i] += k * a.cos();
            q[i] += k * a.sin();
        }
    }
    (p, q)
}

pub fn swing_derivatives(x: &DynamicState, params: &MachineParams, net: &ReducedNetwork) -> DynamicState {
    let pe = electrical_power(&x.delta, &params.e_mag, net);
    let delta_dot = x.omega.iter().map(|w| params.omega0 * (w - 1.0)).collect();
    let omega_dot = (0..x.n_machines())
        .map(|i| {
            let slip = x.omega[i] - 1.0;
            (params.p_mech[i] - pe[i] - params.d[i] * slip) / (2.0 * params.h[i])
        })
        .collect();
    DynamicState {
        delta: delta_dot,
        omega: omega_dot,
    }
}

/// One forward-Euler step of the swing equations plus additive process noise.
pub fn step_process(
    x: &DynamicState,
    params: &MachineParams,
    net: &ReducedNetwork,
    dt: f64,
    w: Option<&DynamicState>,
) -> DynamicState {
    let dx = swing_derivatives(x, params, net);
    let mut next = DynamicState {
        delta: x.delta.iter().zip(&dx.delta).map(|(d, r)| d + dt * r).collect(),
        omega: x.omega.iter().zip(&dx.omega).map(|(w, r)| w + dt * r).collect(),
    };
    if let Some(w) = w {
        next.delta.iter_mut().zip(&w.delta).for_each(|(d, n)| *d += n);
        next.omega.iter_mut().zip(&w.omega).for_each(|(o, n)| *o += n);
    }
    next
}

fn rk4_step(x: &DVector<f64>, h: f64, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DVector<f64> {
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

pub fn scenario_networks(case: &NetworkCase, pf: &PowerFlowSolution, scenario: &FaultScenario) -> Result<ScenarioNetworks> {
    scenario.validate(case)?;
    let ext = reduction::extend_network(case, pf)?;
    let pre = reduction::kron_reduce(&ext)?;

    let fault_pos = case.bus_index(scenario.fault_bus).expect("validated");
    let fault = reduction::kron_reduce(&ext.grounding_bus(fault_pos)?)?;

    let (a, b) = scenario.cleared_line;
    let cleared = case.without_line(a, b)?;
    let island = cleared.unreachable_buses();
    if !island.is_empty() {
        return Err(Error::Island { from: a, to: b, island });
    }
    let post = reduction::kron_reduce(&reduction::extend_network(&cleared, pf)?)?;
    Ok(ScenarioNetworks { pre, fault, post })
}

/// Everything a simulation or filter run needs, derived once from a solved case.
#[derive(Debug, Clone)]
pub struct Study {
    pub scenario: FaultScenario,
    pub frequency: f64,
    pub init: MachineInit,
    pub params: MachineParams,
    pub nets: ScenarioNetworks,
}

impl Study {
    pub fn prepare(case: &NetworkCase, pf: &PowerFlowSolution, scenario: &FaultScenario) -> Result<Self> {
        let nets = scenario_networks(case, pf, scenario)?;
        let init = reduction::machine_init_on(case, pf, &nets.pre)?;
        let params = MachineParams::new(case, &init);
        Ok(Self {
            scenario: scenario.clone(),
            frequency: case.frequency,
            init,
            params,
            nets,
        })
    }

    pub fn equilibrium(&self) -> DynamicState {
        let n = self.init.delta0.len();
        DynamicState::new(self.init.delta0.clone(), vec![1.0; n])
    }

    pub fn regime_at(&self, t: f64) -> Regime {
        self.scenario.regime_at(t, self.frequency)
    }

    pub fn net_at(&self, t: f64) -> &ReducedNetwork {
        self.nets.get(self.regime_at(t))
    }

    pub fn t_clear(&self) -> f64 {
        self.scenario.t_clear(self.frequency)
    }

    /// RK4 ground truth sampled every `dt`, switching networks at the fault
    /// and clearing instants.
    pub fn simulate(&self, substeps: usize) -> Result<Trajectory> {
        if substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be at least 1".into()));
        }
        let sc = &self.scenario;
        let events = [sc.t_fault, self.t_clear()];
        let n = sc.n_samples();
        let h = sc.dt / substeps as f64;

        let mut x = self.equilibrium().to_vector();
        let mut traj = Trajectory {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            regime: Vec::with_capacity(n),
        };
        let mut t = 0.0;
        for k in 0..n {
            let tk = sc.sample_time(k);
            while t < tk - EVENT_EPS {
                let end = (t + h).min(tk);
                // split the substep at any switching instant inside it
                let mut a = t;
                for &e in &events {
                    if e > a + EVENT_EPS && e < end - EVENT_EPS {
                        x = self.rk4_segment(&x, a, e);
                        a = e;
                    }
                }
                x = self.rk4_segment(&x, a, end);
                t = end;
            }
            t = tk;
            let state = DynamicState::from_vector(&x);
            if !state.is_finite() {
                return Err(Error::Instability { machine: 1, t: tk, omega: f64::NAN });
            }
            if let Some((m, w)) = state
                .omega
                .iter()
                .enumerate()
                .find(|(_, w)| (*w - 1.0).abs() > MAX_SPEED_DEVIATION)
            {
                return Err(Error::Instability { machine: m + 1, t: tk, omega: *w });
            }
            traj.times.push(tk);
            traj.states.push(state);
            traj.regime.push(self.regime_at(tk));
        }
        Ok(traj)
    }

    fn rk4_segment(&self, x: &DVector<f64>, a: f64, b: f64) -> DVector<f64> {
        let net = self.net_at(a);
        rk4_step(x, b - a, |v| swing_derivatives(&DynamicState::from_vector(v), &self.params, net).to_vector())
    }
}

pub fn simulate(case: &NetworkCase, pf: &PowerFlowSolution, scenario: &FaultScenario, substeps: usize) -> Result<Trajectory> {
    Study::prepare(case, pf, scenario)?.simulate(substeps)
}
