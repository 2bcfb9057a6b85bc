//! Network case data: buses, branches and classical machines on a common MVA base.
//!
//! Cases are stored as TOML. Top-level keys `name`, `base_mva` and `frequency`
//! are followed by three arrays of records:
//!
//! ```toml
//! name = "two-bus"
//! base_mva = 100.0
//! frequency = 60.0
//! bus = [
//!   { id = 1, kind = "slack", v_setpoint = 1.0 },
//!   { id = 2, kind = "pq", p_load = 0.5, q_load = 0.1, gs = 0.0, bs = 0.0 },
//! ]
//! branch = [ { from = 1, to = 2, r = 0.0, x = 0.1, b_shunt = 0.0, tap = 1.0 } ]
//! machine = [ { bus = 1, h = 5.0, d = 0.0, xd_prime = 0.2, p_gen = 0.5 } ]
//! ```
//!
//! All electrical quantities are per-unit on `base_mva`; `b_shunt` is the
//! total line charging and `tap` the off-nominal ratio on the `from` side.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WECC9: &str = include_str!("../data/wecc9.toml");
const NE39: &str = include_str!("../data/ne39.toml");

/// Names accepted by [`bundled`].
pub const BUNDLED: [&str; 2] = ["wecc9", "ne39"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_setpoint: Option<f64>,
    /// Shunt conductance.
    #[serde(default)]
    pub gs: f64,
    /// Shunt susceptance.
    #[serde(default)]
    pub bs: f64,
}

impl Bus {
    pub fn shunt(&self) -> Complex64 {
        Complex64::new(self.gs, self.bs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b_shunt: f64,
    #[serde(default = "unit_tap")]
    pub tap: f64,
}

fn unit_tap() -> f64 {
    1.0
}

impl Branch {
    pub fn series_admittance(&self) -> Complex64 {
        Complex64::new(self.r, self.x).inv()
    }

    pub fn connects(&self, a: usize, b: usize) -> bool {
        (self.from == a && self.to == b) || (self.from == b && self.to == a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub bus: usize,
    /// Inertia constant (s).
    pub h: f64,
    #[serde(default)]
    pub d: f64,
    pub xd_prime: f64,
    /// Scheduled active power; ignored on the slack bus.
    pub p_gen: f64,
    #[serde(default)]
    pub q_gen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub frequency: f64,
    #[serde(rename = "bus")]
    pub buses: Vec<Bus>,
    #[serde(rename = "branch", default)]
    pub branches: Vec<Branch>,
    #[serde(rename = "machine", default)]
    pub machines: Vec<Machine>,
}

impl NetworkCase {
    /// Parses and validates a case from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let case: NetworkCase = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        case.validate()?;
        Ok(case)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) {
            return Err(Error::Validation(format!("base_mva must be positive, got {}", self.base_mva)));
        }
        if !(self.frequency > 0.0) {
            return Err(Error::Validation(format!("frequency must be positive, got {}", self.frequency)));
        }

        let mut ids = HashSet::new();
        for bus in &self.buses {
            if !ids.insert(bus.id) {
                return Err(Error::Validation(format!("duplicate bus id {}", bus.id)));
            }
            if !bus.p_load.is_finite() || !bus.q_load.is_finite() {
                return Err(Error::Validation(format!("bus {}: non-finite load", bus.id)));
            }
            if !bus.gs.is_finite() || !bus.bs.is_finite() {
                return Err(Error::Validation(format!("bus {}: non-finite shunt", bus.id)));
            }
            match (bus.kind, bus.v_setpoint) {
                (BusKind::Pq, _) => {}
                (_, Some(v)) if v > 0.0 && v.is_finite() => {}
                (_, Some(v)) => {
                    return Err(Error::Validation(format!("bus {}: voltage setpoint {v} must be positive", bus.id)))
                }
                (_, None) => {
                    return Err(Error::Validation(format!("bus {}: voltage setpoint missing", bus.id)))
                }
            }
        }

        let slacks: Vec<usize> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .collect();
        match slacks.len() {
            1 => {}
            0 => return Err(Error::Validation("no slack bus".into())),
            _ => return Err(Error::Validation(format!("multiple slack buses: {slacks:?}"))),
        }

        for (k, br) in self.branches.iter().enumerate() {
            let tag = format!("branch #{} ({}-{})", k + 1, br.from, br.to);
            if br.from == br.to {
                return Err(Error::Validation(format!("{tag}: both ends on the same bus")));
            }
            for end in [br.from, br.to] {
                if !ids.contains(&end) {
                    return Err(Error::Validation(format!("{tag}: unknown bus {end}")));
                }
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::Validation(format!("{tag}: zero impedance")));
            }
            if !(br.tap > 0.0) {
                return Err(Error::Validation(format!("{tag}: tap ratio must be positive")));
            }
        }

        let mut machine_buses = HashSet::new();
        for (k, m) in self.machines.iter().enumerate() {
            let tag = format!("machine #{} (bus {})", k + 1, m.bus);
            let bus = self
                .buses
                .iter()
                .find(|b| b.id == m.bus)
                .ok_or_else(|| Error::Validation(format!("{tag}: unknown bus")))?;
            if bus.kind == BusKind::Pq {
                return Err(Error::Validation(format!("{tag}: machine on a PQ bus")));
            }
            if !machine_buses.insert(m.bus) {
                return Err(Error::Validation(format!("{tag}: second machine on the same bus")));
            }
            if !(m.h > 0.0) {
                return Err(Error::Validation(format!("{tag}: inertia must be positive")));
            }
            if !(m.xd_prime > 0.0) {
                return Err(Error::Validation(format!("{tag}: transient reactance must be positive")));
            }
            if !(m.d >= 0.0) {
                return Err(Error::Validation(format!("{tag}: damping must be non-negative")));
            }
        }
        for bus in self.buses.iter().filter(|b| b.kind == BusKind::Pv) {
            if !machine_buses.contains(&bus.id) {
                return Err(Error::Validation(format!("bus {}: PV bus without a machine", bus.id)));
            }
        }
        Ok(())
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_machines(&self) -> usize {
        self.machines.len()
    }

    /// Position of a bus id in `buses`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn bus_index_map(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect()
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    /// Machine attached to the bus at position `bus_idx`, if any.
    pub fn machine_at(&self, bus_idx: usize) -> Option<&Machine> {
        let id = self.buses[bus_idx].id;
        self.machines.iter().find(|m| m.bus == id)
    }

    /// Total (P, Q) load in MW / MVar.
    pub fn total_load(&self) -> (f64, f64) {
        let (p, q) = self
            .buses
            .iter()
            .fold((0.0, 0.0), |(p, q), b| (p + b.p_load, q + b.q_load));
        (p * self.base_mva, q * self.base_mva)
    }

    /// Copy of the case with the branch(es) between `a` and `b` removed.
    pub fn without_line(&self, a: usize, b: usize) -> Result<NetworkCase> {
        let mut out = self.clone();
        let before = out.branches.len();
        out.branches.retain(|br| !br.connects(a, b));
        if out.branches.len() == before {
            return Err(Error::Validation(format!("no branch between buses {a} and {b}")));
        }
        Ok(out)
    }

    /// Buses not reachable from the slack bus through in-service branches.
    pub fn unreachable_buses(&self) -> Vec<usize> {
        let index = self.bus_index_map();
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            let (f, t) = (index[&br.from], index[&br.to]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.slack_index()];
        seen[stack[0]] = true;
        while let Some(k) = stack.pop() {
            for &j in &adj[k] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        (0..n).filter(|&k| !seen[k]).map(|k| self.buses[k].id).collect()
    }
}

/// Reads and validates a case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    NetworkCase::from_toml_str(&text)
}

/// One of the cases shipped with the crate.
pub fn bundled(name: &str) -> Result<NetworkCase> {
    let text = match name {
        "wecc9" => WECC9,
        "ne39" => NE39,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown bundled case '{other}' (expected one of {BUNDLED:?})"
            )))
        }
    };
    NetworkCase::from_toml_str(text)
}

/// Resolves a bundled case name or a file path.
pub fn resolve(name_or_path: &str) -> Result<NetworkCase> {
    if BUNDLED.contains(&name_or_path) {
        bundled(name_or_path)
    } else {
        load_case(name_or_path)
    }
}

pub fn total_load(case: &NetworkCase) -> (f64, f64) {
    case.total_load()
}
