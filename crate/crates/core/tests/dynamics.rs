use std::f64::consts::PI;

use molgate::adiabatic::{adiabatic_phase, BellBasis};
use molgate::config::RunConfig;
use molgate::experiments::{evaluate_internal, wrap_angle};
use molgate::linalg::{max_abs, CMatrix, C64};
use molgate::model::{single_qubit_phase_gate, GateModel, Molecule, PulseSequence};
use molgate::propagator::{propagate, propagator, PropagationOptions, Schedule};
use proptest::prelude::*;

const WIDTH: f64 = 0.234;

fn model(ratio: f64, theta: f64) -> GateModel {
    let pulses = PulseSequence::calibrated(WIDTH, 1.0, theta).unwrap();
    GateModel::with_coupling_ratio(ratio, pulses, PI)
}

fn first_pulse(m: &GateModel, steps: usize) -> CMatrix {
    let h = m.driven_hamiltonian().unwrap();
    let id = CMatrix::identity(9, 9);
    propagate(
        &h,
        &Schedule::single(0.0, 1.0),
        &id,
        &PropagationOptions::with_steps(steps),
    )
    .unwrap()
    .state
}

/// Phase accumulated by `|B+>` over one pulse, against the dressed-state
/// integral. The residual shrinks as J grows (adiabatic limit).
#[test]
fn bell_phase_follows_adiabatic_integral() {
    let bell = BellBasis::new();
    let mut previous = f64::INFINITY;
    for ratio in [4.0, 8.0, 16.0] {
        let m = model(ratio, PI);
        let u = first_pulse(&m, 4000);
        let amp = (bell.b_plus.adjoint() * &u * &bell.b_plus)[(0, 0)];
        let phi = adiabatic_phase(&m).unwrap();
        let miss = wrap_angle(amp.arg() + phi).abs();
        assert!(
            amp.norm() > 0.999,
            "J/Omega = {ratio}: |amp| = {}",
            amp.norm()
        );
        assert!(miss < 2e-2, "J/Omega = {ratio}: phase miss {miss}");
        assert!(
            miss < previous,
            "J/Omega = {ratio}: {miss} after {previous}"
        );
        previous = miss;
    }
}

#[test]
fn gate_equals_composition_of_single_pulses() {
    let m = model(4.0, PI);
    let h = m.driven_hamiltonian().unwrap();
    let opts = PropagationOptions::with_steps(4000);
    let id = CMatrix::identity(9, 9);
    let u1 = propagate(&h, &Schedule::single(0.0, 1.0), &id, &opts)
        .unwrap()
        .state;
    let u2 = propagate(&h, &Schedule::single(1.0, 2.0), &id, &opts)
        .unwrap()
        .state;
    let z = single_qubit_phase_gate(Molecule::Second, PI).to_dense();
    let composed = &z * &u2 * &z * &u1;
    let full = propagator(&h, &m.gate_schedule(), &opts).unwrap().state;
    assert!(max_abs(&(&composed - &full)) < 1e-10);

    let swapped = &z * &u1 * &z * &u2;
    assert!(
        max_abs(&(&swapped - &full)) > 1e-3,
        "pulse order must matter"
    );
}

#[test]
fn time_ordering_matters_within_a_pulse() {
    // Rising half of pulse 1 (a full pulse is time-symmetric), as a product
    // of short-time exponentials in both orders.
    let m = model(4.0, PI);
    let (end, n) = (0.5, 400);
    let dt = end / n as f64;
    let mut forward = CMatrix::identity(9, 9);
    let mut backward = CMatrix::identity(9, 9);
    for k in 0..n {
        let t = (k as f64 + 0.5) * dt;
        let step = (m.hamiltonian_at(t).unwrap() * C64::new(0.0, -dt)).exp();
        forward = &step * forward;
        backward *= &step;
    }
    let h = m.driven_hamiltonian().unwrap();
    let exact = propagate(
        &h,
        &Schedule::single(0.0, end),
        &CMatrix::identity(9, 9),
        &PropagationOptions::with_steps(4000),
    )
    .unwrap()
    .state;
    let (fwd, bwd) = (
        max_abs(&(&forward - &exact)),
        max_abs(&(&backward - &exact)),
    );
    assert!(fwd < 1e-3, "forward {fwd}");
    assert!(bwd > 1e-2, "backward {bwd}");
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let c = RunConfig::default();
    let a = evaluate_internal(&c, 3.7).unwrap();
    let b = evaluate_internal(&c, 3.7).unwrap();
    assert_eq!(a.evolution.state, b.evolution.state);
    assert_eq!(a.ddi_time, b.ddi_time);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gate_invariants(ratio in 0.5f64..8.0, theta in 0.0f64..(2.0 * PI)) {
        let c = RunConfig {
            relative_phase: theta,
            steps_per_pulse: Some(1000),
            ..RunConfig::default()
        };
        let p = evaluate_internal(&c, ratio).unwrap();
        let f = p.report.fidelity;
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(p.unitarity_residual < 1e-9);
        for t in p.ddi_time {
            prop_assert!((0.0..=2.0).contains(&t));
        }
        // |dd> never reaches the excited manifold.
        prop_assert_eq!(p.ddi_time[3], 0.0);
        let mirrored = evaluate_internal(&c, -ratio).unwrap();
        prop_assert!((mirrored.report.fidelity - f).abs() < 1e-10);
    }
}
