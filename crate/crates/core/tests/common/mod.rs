//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dse_core::cases::{BusKind, NetworkCase};
use dse_core::powerflow::ComplexMatrix;
use dse_core::reduction::ExtendedAdmittance;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Y-bus assembled branch by branch from the pi-equivalent with an ideal
/// transformer on the from side.
pub fn direct_ybus(case: &NetworkCase) -> ComplexMatrix {
    let n = case.buses.len();
    let pos = |id: usize| case.buses.iter().position(|b| b.id == id).unwrap();
    let mut y = ComplexMatrix::zeros(n, n);
    for b in &case.buses {
        let k = pos(b.id);
        y[(k, k)] += c(b.gs, b.bs);
    }
    for br in &case.branches {
        let (f, t) = (pos(br.from), pos(br.to));
        let z = c(br.r, br.x);
        let ys = c(1.0, 0.0) / z;
        let half = c(0.0, br.b_shunt / 2.0);
        let a = br.tap;
        y[(f, f)] += (ys + half) / (a * a);
        y[(t, t)] += ys + half;
        y[(f, t)] -= ys / a;
        y[(t, f)] -= ys / a;
    }
    y
}

/// Gauss-Seidel power flow, run until the largest voltage update is below `tol`.
pub fn gauss_seidel(case: &NetworkCase, tol: f64, max_sweeps: usize) -> Vec<Complex64> {
    let y = direct_ybus(case);
    let n = case.buses.len();
    let mut v: Vec<Complex64> = case
        .buses
        .iter()
        .map(|b| c(b.v_setpoint.unwrap_or(1.0), 0.0))
        .collect();
    let p_gen = |k: usize| {
        let id = case.buses[k].id;
        case.machines.iter().filter(|m| m.bus == id).map(|m| m.p_gen).sum::<f64>()
    };
    for _ in 0..max_sweeps {
        let mut change: f64 = 0.0;
        for k in 0..n {
            let bus = &case.buses[k];
            if bus.kind == BusKind::Slack {
                continue;
            }
            let others: Complex64 = (0..n).filter(|&j| j != k).map(|j| y[(k, j)] * v[j]).sum();
            let p = p_gen(k) - bus.p_load;
            let q = match bus.kind {
                BusKind::Pv => -(v[k].conj() * (others + y[(k, k)] * v[k])).im,
                _ => -bus.q_load,
            };
            let mut vk = (c(p, -q) / v[k].conj() - others) / y[(k, k)];
            if bus.kind == BusKind::Pv {
                vk = vk / vk.norm() * bus.v_setpoint.unwrap();
            }
            change = change.max((vk - v[k]).norm());
            v[k] = vk;
        }
        if change < tol {
            return v;
        }
    }
    panic!("Gauss-Seidel did not converge in {max_sweeps} sweeps");
}

fn complex_inverse(m: &ComplexMatrix) -> ComplexMatrix {
    m.clone().lu().try_inverse().expect("nonsingular")
}

/// Machine currents for internal EMFs `e`, from the inverse of the whole
/// extended matrix: `[V; E] = Z [0; I]`, so `I = Z22⁻¹ E`.
pub fn extended_currents(ext: &ExtendedAdmittance, e: &DVector<Complex64>) -> DVector<Complex64> {
    let nb = ext.y11.nrows();
    let ng = ext.y22.nrows();
    let mut full = ComplexMatrix::zeros(nb + ng, nb + ng);
    full.view_mut((0, 0), (nb, nb)).copy_from(&ext.y11);
    full.view_mut((0, nb), (nb, ng)).copy_from(&ext.y12);
    full.view_mut((nb, 0), (ng, nb)).copy_from(&ext.y21);
    full.view_mut((nb, nb), (ng, ng)).copy_from(&ext.y22);
    let z = complex_inverse(&full);
    let z22 = z.view((nb, nb), (ng, ng)).into_owned();
    complex_inverse(&z22) * e
}

/// One predict/update cycle of the textbook linear Kalman filter.
pub fn kalman_step(
    x: &DVector<f64>,
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    cm: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let xp = a * x;
    let pp = a * p * a.transpose() + q;
    let s = cm * &pp * cm.transpose() + r;
    let k = &pp * cm.transpose() * s.try_inverse().unwrap();
    let xn = &xp + &k * (z - cm * &xp);
    let n = x.len();
    let pn = (DMatrix::identity(n, n) - &k * cm) * &pp;
    (xn, pn)
}

/// Largest entrywise deviation relative to the largest reference entry.
pub fn max_rel_dev(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = reference.amax().max(1e-300);
    (a - reference).amax() / scale
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric positive-definite matrix `M Mᵀ + floor·I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(n, n) * floor
}
