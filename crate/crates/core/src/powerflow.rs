//! Bus admittance matrix and polar Newton-Raphson power flow.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::cases::{BusKind, NetworkCase};
use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    /// Net injections (generation minus load), per bus.
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    /// Number of mismatch evaluations, the last one being below tolerance.
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn voltage(&self, bus_idx: usize) -> Complex64 {
        Complex64::from_polar(self.v_mag[bus_idx], self.v_ang[bus_idx])
    }

    pub fn voltages(&self) -> DVector<Complex64> {
        DVector::from_iterator(self.v_mag.len(), (0..self.v_mag.len()).map(|k| self.voltage(k)))
    }

    /// Complex power delivered by the generator at bus `bus_idx` (injection plus local load).
    pub fn generation(&self, case: &NetworkCase, bus_idx: usize) -> Complex64 {
        let bus = &case.buses[bus_idx];
        Complex64::new(self.p_inj[bus_idx] + bus.p_load, self.q_inj[bus_idx] + bus.q_load)
    }
}

#[derive(Debug, Clone)]
pub struct PowerFlowOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial (magnitude, angle) guess; flat start when absent.
    pub initial: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            initial: None,
        }
    }
}

pub fn build_ybus(case: &NetworkCase) -> ComplexMatrix {
    let n = case.n_buses();
    let index = case.bus_index_map();
    let mut y = ComplexMatrix::zeros(n, n);
    for br in &case.branches {
        let (f, t) = (index[&br.from], index[&br.to]);
        let ys = br.series_admittance();
        let ych = Complex64::new(0.0, br.b_shunt / 2.0);
        y[(f, f)] += (ys + ych) / (br.tap * br.tap);
        y[(t, t)] += ys + ych;
        y[(f, t)] -= ys / br.tap;
        y[(t, f)] -= ys / br.tap;
    }
    for (k, bus) in case.buses.iter().enumerate() {
        y[(k, k)] += bus.shunt();
    }
    y
}

/// Bus positions split into (PV ∪ PQ in bus order, PQ in bus order).
fn unknown_sets(case: &NetworkCase) -> (Vec<usize>, Vec<usize>) {
    let pvpq = (0..case.n_buses())
        .filter(|&k| case.buses[k].kind != BusKind::Slack)
        .collect();
    let pq = (0..case.n_buses())
        .filter(|&k| case.buses[k].kind == BusKind::Pq)
        .collect();
    (pvpq, pq)
}

/// Scheduled net injection per bus (slack entry is meaningless).
pub fn scheduled_injections(case: &NetworkCase) -> Vec<Complex64> {
    (0..case.n_buses())
        .map(|k| {
            let bus = &case.buses[k];
            let gen = case.machine_at(k).map_or(0.0, |m| m.p_gen);
            Complex64::new(gen - bus.p_load, -bus.q_load)
        })
        .collect()
}

fn complex_voltages(v_mag: &[f64], v_ang: &[f64]) -> DVector<Complex64> {
    DVector::from_iterator(
        v_mag.len(),
        v_mag.iter().zip(v_ang).map(|(&m, &a)| Complex64::from_polar(m, a)),
    )
}

/// Calculated complex injections S = V ∘ conj(Y V).
pub fn injections(ybus: &ComplexMatrix, v_mag: &[f64], v_ang: &[f64]) -> Vec<Complex64> {
    let v = complex_voltages(v_mag, v_ang);
    let i = ybus * &v;
    v.iter().zip(i.iter()).map(|(v, i)| v * i.conj()).collect()
}

/// Stacked [ΔP (PV+PQ); ΔQ (PQ)] of scheduled minus calculated injections.
pub fn mismatch(case: &NetworkCase, ybus: &ComplexMatrix, v_mag: &[f64], v_ang: &[f64]) -> DVector<f64> {
    let (pvpq, pq) = unknown_sets(case);
    let sched = scheduled_injections(case);
    let calc = injections(ybus, v_mag, v_ang);
    let dp = pvpq.iter().map(|&k| sched[k].re - calc[k].re);
    let dq = pq.iter().map(|&k| sched[k].im - calc[k].im);
    DVector::from_iterator(pvpq.len() + pq.len(), dp.chain(dq))
}

/// Jacobian of the calculated injections [P (PV+PQ); Q (PQ)] with respect to
/// [θ (PV+PQ); |V| (PQ)].
pub fn jacobian(case: &NetworkCase, ybus: &ComplexMatrix, v_mag: &[f64], v_ang: &[f64]) -> DMatrix<f64> {
    let (pvpq, pq) = unknown_sets(case);
    let n = v_mag.len();
    let v = complex_voltages(v_mag, v_ang);
    let ibus = ybus * &v;
    let j = Complex64::i();

    // dS_i/dθ_k and dS_i/d|V|_k in closed form.
    let ds_dang = |i: usize, k: usize| -> Complex64 {
        let mut d = -v[i] * (ybus[(i, k)] * v[k]).conj();
        if i == k {
            d += v[i] * ibus[i].conj();
        }
        j * d
    };
    let ds_dmag = |i: usize, k: usize| -> Complex64 {
        let vk_unit = v[k] / v_mag[k];
        let mut d = v[i] * (ybus[(i, k)] * vk_unit).conj();
        if i == k {
            d += ibus[i].conj() * vk_unit;
        }
        d
    };
    debug_assert_eq!(ybus.nrows(), n);

    let (np, nq) = (pvpq.len(), pq.len());
    let mut jac = DMatrix::zeros(np + nq, np + nq);
    for (r, &i) in pvpq.iter().enumerate() {
        for (c, &k) in pvpq.iter().enumerate() {
            jac[(r, c)] = ds_dang(i, k).re;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(r, np + c)] = ds_dmag(i, k).re;
        }
    }
    for (r, &i) in pq.iter().enumerate() {
        for (c, &k) in pvpq.iter().enumerate() {
            jac[(np + r, c)] = ds_dang(i, k).im;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(np + r, np + c)] = ds_dmag(i, k).im;
        }
    }
    jac
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn solve_power_flow(case: &NetworkCase, tol: f64, max_iter: usize) -> Result<PowerFlowSolution> {
    solve_power_flow_with(
        case,
        &PowerFlowOptions {
            tol,
            max_iter,
            initial: None,
        },
    )
}

pub fn solve_power_flow_with(case: &NetworkCase, opts: &PowerFlowOptions) -> Result<PowerFlowSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let n = case.n_buses();
    let ybus = build_ybus(case);
    let (pvpq, pq) = unknown_sets(case);

    let (mut v_mag, mut v_ang) = match &opts.initial {
        Some((m, a)) if m.len() == n && a.len() == n => (m.clone(), a.clone()),
        Some(_) => return Err(Error::Dimension("initial guess length differs from bus count".into())),
        None => (vec![1.0; n], vec![0.0; n]),
    };
    for (k, bus) in case.buses.iter().enumerate() {
        if let Some(vs) = bus.v_setpoint.filter(|_| bus.kind != BusKind::Pq) {
            v_mag[k] = vs;
        }
    }

    let mut worst = f64::INFINITY;
    for iter in 1..=opts.max_iter.max(1) {
        let f = mismatch(case, &ybus, &v_mag, &v_ang);
        worst = max_abs(&f);
        if worst < opts.tol {
            let s = injections(&ybus, &v_mag, &v_ang);
            return Ok(PowerFlowSolution {
                p_inj: s.iter().map(|s| s.re).collect(),
                q_inj: s.iter().map(|s| s.im).collect(),
                v_mag,
                v_ang,
                iterations: iter,
                max_mismatch: worst,
            });
        }
        if iter == opts.max_iter.max(1) {
            break;
        }
        let jac = jacobian(case, &ybus, &v_mag, &v_ang);
        let dx = jac.lu().solve(&f).ok_or(Error::SingularJacobian { iteration: iter })?;
        if dx.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularJacobian { iteration: iter });
        }
        for (c, &k) in pvpq.iter().enumerate() {
            v_ang[k] += dx[c];
        }
        for (c, &k) in pq.iter().enumerate() {
            v_mag[k] += dx[pvpq.len() + c];
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        max_mismatch: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::bundled;

    fn two_bus(load: (f64, f64)) -> NetworkCase {
        NetworkCase::from_toml_str(&format!(
            r#"
            base_mva = 100.0
            frequency = 60.0
            bus = [
              {{ id = 1, kind = "slack", v_setpoint = 1.02 }},
              {{ id = 2, kind = "pq", p_load = {}, q_load = {} }},
            ]
            branch = [ {{ from = 1, to = 2, r = 0.0, x = 0.1 }} ]
            "#,
            load.0, load.1
        ))
        .unwrap()
    }

    #[test]
    fn single_line_ybus() {
        let y = build_ybus(&two_bus((0.0, 0.0)));
        let c = |re, im| Complex64::new(re, im);
        let expect = [[c(0.0, -10.0), c(0.0, 10.0)], [c(0.0, 10.0), c(0.0, -10.0)]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((y[(i, j)] - expect[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn isolated_bus_row_holds_only_shunt() {
        let mut case = two_bus((0.0, 0.0));
        case.buses.push(crate::cases::Bus {
            id: 3,
            kind: BusKind::Pq,
            p_load: 0.0,
            q_load: 0.0,
            v_setpoint: None,
            gs: 0.02,
            bs: 0.3,
        });
        let y = build_ybus(&case);
        assert_eq!(y[(2, 2)], Complex64::new(0.02, 0.3));
        assert_eq!(y[(2, 0)], Complex64::new(0.0, 0.0));
        assert_eq!(y[(2, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn zero_load_is_flat_in_one_iteration() {
        let text = two_bus((0.0, 0.0)).to_toml_string().unwrap().replace("1.02", "1.0");
        let case = NetworkCase::from_toml_str(&text).unwrap();
        let ybus = build_ybus(&case);
        assert_eq!(mismatch(&case, &ybus, &[1.0, 1.0], &[0.0, 0.0]).len(), 2);
        let sol = solve_power_flow(&case, 1e-8, 20).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.v_ang, vec![0.0, 0.0]);
        assert_eq!(sol.v_mag, vec![1.0, 1.0]);
    }

    #[test]
    fn two_bus_with_load_converges() {
        let case = two_bus((0.5, 0.2));
        let sol = solve_power_flow(&case, 1e-10, 20).unwrap();
        assert!(sol.v_ang[1] < 0.0);
        let ybus = build_ybus(&case);
        assert!(max_abs(&mismatch(&case, &ybus, &sol.v_mag, &sol.v_ang)) < 1e-10);
        // lossless line: slack supplies exactly the load
        assert!((sol.p_inj[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn nonconvergence_reports_mismatch() {
        let case = two_bus((50.0, 20.0));
        match solve_power_flow(&case, 1e-8, 8) {
            Err(Error::NonConvergence { max_mismatch, .. }) => assert!(max_mismatch > 1e-8),
            Err(Error::SingularJacobian { .. }) => {}
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        assert!(solve_power_flow(&two_bus((0.0, 0.0)), 0.0, 10).is_err());
    }

    #[test]
    fn wecc9_flat_start_mismatch_is_schedule_minus_flows() {
        let case = bundled("wecc9").unwrap();
        let ybus = build_ybus(&case);
        let mut v_mag = vec![1.0; 9];
        v_mag[0] = 1.04;
        v_mag[1] = 1.025;
        v_mag[2] = 1.025;
        let v_ang = vec![0.0; 9];
        let f = mismatch(&case, &ybus, &v_mag, &v_ang);
        assert_eq!(f.len(), 8 + 6);
        // independent evaluation of P_i = Σ_k |V_i||V_k|(G_ik cos θ_ik + B_ik sin θ_ik) at θ = 0
        let p_calc = |i: usize| -> f64 { (0..9).map(|k| v_mag[i] * v_mag[k] * ybus[(i, k)].re).sum() };
        let q_calc = |i: usize| -> f64 { (0..9).map(|k| -v_mag[i] * v_mag[k] * ybus[(i, k)].im).sum() };
        // bus 2 (PV): 1.63 scheduled
        assert!((f[0] - (1.63 - p_calc(1))).abs() < 1e-12);
        // bus 5 (PQ, first ΔQ entry is bus 4)
        assert!((f[3] - (-1.25 - p_calc(4))).abs() < 1e-12);
        assert!((f[8 + 1] - (-0.5 - q_calc(4))).abs() < 1e-12);
        assert!(max_abs(&f) > 0.1);
    }
}
