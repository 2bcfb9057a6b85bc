//! Extended admittance system and Kron reduction to internal machine nodes.
//!
//! Loads become constant admittances at the solved operating point and each
//! machine is a constant EMF behind its transient reactance. Eliminating all
//! network buses leaves a machines × machines admittance `y_red`, and the
//! eliminated bus voltages are recovered linearly as `V = r_v · E`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::cases::NetworkCase;
use crate::dynamics;
use crate::error::{Error, Result};
use crate::powerflow::{build_ybus, ComplexMatrix, PowerFlowSolution};

/// Block partition of the extended admittance matrix.
#[derive(Debug, Clone)]
pub struct ExtendedAdmittance {
    /// Network buses × network buses, loads and machine reactances included.
    pub y11: ComplexMatrix,
    pub y12: ComplexMatrix,
    pub y21: ComplexMatrix,
    pub y22: ComplexMatrix,
    /// Case bus position of each `y11` row.
    pub bus_order: Vec<usize>,
    /// Machine index of each `y22` row.
    pub machine_order: Vec<usize>,
    /// Number of buses in the originating case.
    pub n_case_buses: usize,
}

impl ExtendedAdmittance {
    /// Removes a network bus, holding it at zero volts (bolted fault).
    pub fn grounding_bus(&self, bus_pos: usize) -> Result<ExtendedAdmittance> {
        let row = self
            .bus_order
            .iter()
            .position(|&b| b == bus_pos)
            .ok_or_else(|| Error::InvalidArgument(format!("bus position {bus_pos} not in network")))?;
        let mut out = self.clone();
        out.y11 = out.y11.remove_row(row).remove_column(row);
        out.y12 = out.y12.remove_row(row);
        out.y21 = out.y21.remove_column(row);
        out.bus_order.remove(row);
        Ok(out)
    }
}

/// Machine-node equivalent of a network.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    pub y_red: ComplexMatrix,
    pub y_mag: DMatrix<f64>,
    /// Angles of `y_red` entries (rad).
    pub y_ang: DMatrix<f64>,
    /// Network buses × machines voltage reconstruction matrix.
    pub r_v: ComplexMatrix,
    /// Case bus position of each `r_v` row.
    pub bus_order: Vec<usize>,
    pub n_case_buses: usize,
}

impl ReducedNetwork {
    pub fn n_machines(&self) -> usize {
        self.y_red.nrows()
    }

    /// Row of `r_v` reconstructing the bus at case position `bus_pos`, if present.
    pub fn row_of_bus(&self, bus_pos: usize) -> Option<usize> {
        self.bus_order.iter().position(|&b| b == bus_pos)
    }

    /// Builds the polar tables from an arbitrary reduced admittance.
    pub fn from_parts(y_red: ComplexMatrix, r_v: ComplexMatrix, bus_order: Vec<usize>, n_case_buses: usize) -> Self {
        let y_mag = y_red.map(|y| y.norm());
        let y_ang = y_red.map(|y| y.arg());
        Self {
            y_red,
            y_mag,
            y_ang,
            r_v,
            bus_order,
            n_case_buses,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineInit {
    pub e_mag: Vec<f64>,
    pub delta0: Vec<f64>,
    pub p_mech: Vec<f64>,
}

/// Constant-impedance load admittances (P − jQ)/|V|² at the solved voltages.
pub fn load_admittances(case: &NetworkCase, pf: &PowerFlowSolution) -> Vec<Complex64> {
    case.buses
        .iter()
        .zip(&pf.v_mag)
        .map(|(b, &v)| Complex64::new(b.p_load, -b.q_load) / (v * v))
        .collect()
}

fn machine_admittance(xd_prime: f64) -> Complex64 {
    Complex64::new(0.0, xd_prime).inv()
}

pub fn extend_network(case: &NetworkCase, pf: &PowerFlowSolution) -> Result<ExtendedAdmittance> {
    let nb = case.n_buses();
    let nm = case.n_machines();
    if pf.v_mag.len() != nb {
        return Err(Error::Dimension(format!(
            "power flow has {} buses, case has {nb}",
            pf.v_mag.len()
        )));
    }
    let index = case.bus_index_map();
    let mut y11 = build_ybus(case);
    for (k, y) in load_admittances(case, pf).into_iter().enumerate() {
        y11[(k, k)] += y;
    }
    let mut y12 = ComplexMatrix::zeros(nb, nm);
    let mut y22 = ComplexMatrix::zeros(nm, nm);
    for (m, machine) in case.machines.iter().enumerate() {
        let k = index[&machine.bus];
        let y = machine_admittance(machine.xd_prime);
        y11[(k, k)] += y;
        y12[(k, m)] = -y;
        y22[(m, m)] = y;
    }
    let y21 = y12.transpose();
    Ok(ExtendedAdmittance {
        y11,
        y12,
        y21,
        y22,
        bus_order: (0..nb).collect(),
        machine_order: (0..nm).collect(),
        n_case_buses: nb,
    })
}

/// Ratio of extreme pivot magnitudes of an LU factorization; a cheap
/// condition estimate.
fn pivot_ratio(u_diag: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = u_diag.fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn kron_reduce(ext: &ExtendedAdmittance) -> Result<ReducedNetwork> {
    let nb = ext.y11.nrows();
    let nm = ext.y22.nrows();
    let r_v = if nb == 0 {
        ComplexMatrix::zeros(0, nm)
    } else {
        let lu = ext.y11.clone().lu();
        let condition = pivot_ratio(lu.u().diagonal().iter().map(|d| d.norm()));
        if !condition.is_finite() || condition > 1e14 {
            return Err(Error::SingularMatrix {
                what: "load-bus admittance block y11",
                condition,
            });
        }
        let x = lu.solve(&ext.y12).ok_or(Error::SingularMatrix {
            what: "load-bus admittance block y11",
            condition,
        })?;
        -x
    };
    let y_red = &ext.y22 + &ext.y21 * &r_v;
    Ok(ReducedNetwork::from_parts(
        y_red,
        r_v,
        ext.bus_order.clone(),
        ext.n_case_buses,
    ))
}

/// Reduced network of the intact system at the solved operating point.
pub fn reduce(case: &NetworkCase, pf: &PowerFlowSolution) -> Result<ReducedNetwork> {
    kron_reduce(&extend_network(case, pf)?)
}

/// Classical-model initial conditions. `p_mech` is evaluated on the pre-fault
/// reduced network so that the initial state is an exact equilibrium.
pub fn machine_init(case: &NetworkCase, pf: &PowerFlowSolution) -> Result<MachineInit> {
    let net = reduce(case, pf)?;
    machine_init_on(case, pf, &net)
}

pub fn machine_init_on(case: &NetworkCase, pf: &PowerFlowSolution, net: &ReducedNetwork) -> Result<MachineInit> {
    let index = case.bus_index_map();
    let mut e_mag = Vec::with_capacity(case.n_machines());
    let mut delta0 = Vec::with_capacity(case.n_machines());
    for machine in &case.machines {
        let k = index[&machine.bus];
        let v = pf.voltage(k);
        if v.norm() == 0.0 {
            return Err(Error::ZeroVoltage { bus: machine.bus });
        }
        let current = (pf.generation(case, k) / v).conj();
        let e = v + Complex64::new(0.0, machine.xd_prime) * current;
        e_mag.push(e.norm());
        delta0.push(e.arg());
    }
    let p_mech = dynamics::electrical_power(&delta0, &e_mag, net);
    Ok(MachineInit { e_mag, delta0, p_mech })
}
