use std::f64::consts::FRAC_PI_2;

use dse_core::cases::{self, NetworkCase};
use dse_core::dynamics::{
    electrical_power, simulate, step_process, DynamicState, FaultScenario, Regime, Study, Trajectory,
};
use dse_core::powerflow::{solve_power_flow, ComplexMatrix, PowerFlowSolution};
use dse_core::reduction::ReducedNetwork;
use dse_core::Error;
use num_complex::Complex64;

fn solved(name: &str) -> (NetworkCase, PowerFlowSolution) {
    let case = cases::bundled(name).unwrap();
    let pf = solve_power_flow(&case, 1e-10, 20).unwrap();
    (case, pf)
}

fn scenario(name: &str) -> FaultScenario {
    let (bus, line) = if name == "wecc9" { (8, (8, 9)) } else { (4, (4, 14)) };
    FaultScenario {
        fault_bus: bus,
        t_fault: 1.0,
        clearing_cycles: 2.0,
        cleared_line: line,
        t_end: 10.0,
        dt: 0.01,
    }
}

fn max_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| (x.to_vector() - y.to_vector()).amax())
        .fold(0.0, f64::max)
}

#[test]
fn single_self_term_power_ignores_angle() {
    let net = ReducedNetwork::from_parts(ComplexMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)), ComplexMatrix::zeros(0, 1), vec![], 0);
    for d in [-2.0, 0.0, 0.7] {
        assert!((electrical_power(&[d], &[1.0], &net)[0] - 1.0).abs() < 1e-15);
    }
}

#[test]
fn quadrature_coupling_carries_no_power() {
    let y = ComplexMatrix::from_row_slice(
        2,
        2,
        &[Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, FRAC_PI_2), Complex64::from_polar(1.0, FRAC_PI_2), Complex64::new(0.0, 0.0)],
    );
    let net = ReducedNetwork::from_parts(y, ComplexMatrix::zeros(0, 2), vec![], 0);
    let p = electrical_power(&[0.0, 0.0], &[1.0, 1.0], &net);
    assert!(p[0].abs() < 1e-15);
}

#[test]
fn no_fault_holds_equilibrium() {
    for name in ["wecc9", "ne39"] {
        let (case, pf) = solved(name);
        let sc = FaultScenario {
            t_fault: 20.0,
            ..scenario(name)
        };
        let traj = simulate(&case, &pf, &sc, 10).unwrap();
        assert_eq!(traj.len(), 1001);
        let x0 = &traj.states[0];
        for x in &traj.states {
            for (d, d0) in x.delta.iter().zip(&x0.delta) {
                assert!((d - d0).abs() < 1e-6);
            }
            assert!(x.omega.iter().all(|w| (w - 1.0).abs() < 1e-8));
        }
        assert!(traj.regime.iter().all(|&r| r == Regime::PreFault));
    }
}

#[test]
fn wecc9_fault_swings_and_stays_bounded() {
    let (case, pf) = solved("wecc9");
    let traj = simulate(&case, &pf, &scenario("wecc9"), 10).unwrap();
    let x0 = traj.states[0].clone();
    // untouched before the fault
    for (t, x) in traj.times.iter().zip(&traj.states) {
        if *t < 1.0 {
            assert_eq!(x, &x0);
        }
    }
    let swing = traj
        .states
        .iter()
        .map(|x| (x.delta[1] - x.delta[0]) - (x0.delta[1] - x0.delta[0]))
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(swing > 0.05, "fault barely moved the machines: {swing}");
    assert!(traj.states.iter().all(|x| x.omega.iter().all(|w| (w - 1.0).abs() < 0.05)));
    assert_eq!(traj.regime[100], Regime::FaultOn);
    assert_eq!(traj.regime[103], Regime::FaultOn);
    assert_eq!(traj.regime[104], Regime::PostFault);
    assert_eq!(traj.regime[99], Regime::PreFault);
}

#[test]
fn halving_substep_changes_little() {
    for name in ["wecc9", "ne39"] {
        let (case, pf) = solved(name);
        let sc = scenario(name);
        let a = simulate(&case, &pf, &sc, 10).unwrap();
        let b = simulate(&case, &pf, &sc, 20).unwrap();
        assert!(max_gap(&a, &b) < 1e-6, "{name}: {}", max_gap(&a, &b));
    }
}

#[test]
fn rk4_is_fourth_order() {
    let (case, pf) = solved("wecc9");
    let sc = FaultScenario {
        t_end: 2.0,
        dt: 0.04,
        ..scenario("wecc9")
    };
    let study = Study::prepare(&case, &pf, &sc).unwrap();
    let reference = study.simulate(64).unwrap();
    let end = |t: &Trajectory| t.states.last().unwrap().to_vector();
    let e1 = (end(&study.simulate(2).unwrap()) - end(&reference)).amax();
    let e2 = (end(&study.simulate(4).unwrap()) - end(&reference)).amax();
    let ratio = e1 / e2;
    assert!((10.0..24.0).contains(&ratio), "error ratio {ratio} ({e1:e} / {e2:e})");
}

#[test]
fn euler_error_is_second_order_per_step() {
    let (case, pf) = solved("ne39");
    let study = Study::prepare(&case, &pf, &scenario("ne39")).unwrap();
    let mut x = study.equilibrium();
    x.delta[3] += 0.05;
    x.omega[0] += 0.002;
    let net = &study.nets.post;
    let gap = |dt: f64| {
        let full = step_process(&x, &study.params, net, dt, None);
        let half = step_process(&step_process(&x, &study.params, net, dt / 2.0, None), &study.params, net, dt / 2.0, None);
        (full.to_vector() - half.to_vector()).amax()
    };
    let ratio = gap(0.01) / gap(0.005);
    assert!((3.5..4.5).contains(&ratio), "{ratio}");
}

#[test]
fn euler_fixed_point_and_additive_noise() {
    for name in ["wecc9", "ne39"] {
        let (case, pf) = solved(name);
        let study = Study::prepare(&case, &pf, &scenario(name)).unwrap();
        let x = study.equilibrium();
        let n = x.n_machines();
        let next = step_process(&x, &study.params, &study.nets.pre, 0.01, None);
        assert!((next.to_vector() - x.to_vector()).amax() < 1e-12);
        let w = DynamicState::new(vec![0.01; n], vec![0.0; n]);
        let shifted = step_process(&x, &study.params, &study.nets.pre, 0.01, Some(&w));
        for (a, b) in shifted.delta.iter().zip(&next.delta) {
            assert!((a - b - 0.01).abs() < 1e-15);
        }
    }
}

#[test]
fn undamped_system_stays_bounded_without_switching() {
    let (case, pf) = solved("ne39");
    assert!(case.machines.iter().all(|m| m.d == 0.0));
    let mut study = Study::prepare(
        &case,
        &pf,
        &FaultScenario {
            t_fault: 20.0,
            ..scenario("ne39")
        },
    )
    .unwrap();
    // balanced mechanical steps so the machines oscillate about a new point
    study.params.p_mech[2] += 0.5;
    study.params.p_mech[5] -= 0.5;
    let traj = study.simulate(10).unwrap();
    let x0 = traj.states[0].clone();
    let moved = traj.states.iter().any(|x| (x.delta[2] - x0.delta[2]).abs() > 1e-3);
    assert!(moved);
    for x in &traj.states {
        assert!(x.is_finite());
        assert!(x.omega.iter().all(|w| (w - 1.0).abs() < 0.01));
        let rel = |s: &DynamicState, i: usize| s.delta[i] - s.delta[0];
        assert!((1..x.n_machines()).all(|i| (rel(x, i) - rel(&x0, i)).abs() < 1.5));
    }
}

#[test]
fn state_is_continuous_across_switches() {
    let (case, pf) = solved("wecc9");
    let sc = scenario("wecc9");
    let study = Study::prepare(&case, &pf, &sc).unwrap();
    let traj = study.simulate(10).unwrap();
    let omega0 = 2.0 * std::f64::consts::PI * case.frequency;
    for k in 1..traj.len() {
        let (a, b) = (&traj.states[k - 1], &traj.states[k]);
        let max_dev = a.omega.iter().chain(&b.omega).map(|w| (w - 1.0).abs()).fold(0.0, f64::max);
        for (d0, d1) in a.delta.iter().zip(&b.delta) {
            // angle moves no faster than the largest speed deviation allows
            assert!((d1 - d0).abs() <= sc.dt * omega0 * max_dev * 1.5 + 1e-12);
        }
        for (w0, w1) in a.omega.iter().zip(&b.omega) {
            assert!((w1 - w0).abs() < 1e-3);
        }
    }
}

#[test]
fn sustained_fault_is_reported_as_instability() {
    let (case, pf) = solved("wecc9");
    let sc = FaultScenario {
        clearing_cycles: 120.0,
        t_end: 5.0,
        ..scenario("wecc9")
    };
    match simulate(&case, &pf, &sc, 10) {
        Err(Error::Instability { machine, t, omega }) => {
            assert!((1..=3).contains(&machine));
            assert!(t > 1.0);
            assert!((omega - 1.0).abs() > 0.2);
        }
        other => panic!("expected loss of synchronism, got {:?}", other.map(|t| t.len())),
    }
}

#[test]
fn zero_substeps_is_rejected() {
    let (case, pf) = solved("wecc9");
    assert!(simulate(&case, &pf, &scenario("wecc9"), 0).is_err());
}

#[test]
fn invalid_scenarios_are_rejected() {
    let (case, pf) = solved("wecc9");
    for sc in [
        FaultScenario { fault_bus: 42, ..scenario("wecc9") },
        FaultScenario { cleared_line: (1, 9), ..scenario("wecc9") },
        FaultScenario { clearing_cycles: 0.0, ..scenario("wecc9") },
        FaultScenario { dt: 0.0, ..scenario("wecc9") },
    ] {
        assert!(Study::prepare(&case, &pf, &sc).is_err(), "{sc:?}");
    }
}

#[test]
fn two_cycle_clearing_time() {
    let sc = scenario("wecc9");
    assert!((sc.t_clear(60.0) - (1.0 + 2.0 / 60.0)).abs() < 1e-15);
    assert_eq!(sc.regime_at(0.99, 60.0), Regime::PreFault);
    assert_eq!(sc.regime_at(1.0, 60.0), Regime::FaultOn);
    assert_eq!(sc.regime_at(1.04, 60.0), Regime::PostFault);
}
