use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64 as C64;

use stirap_cnot::cli::{run_sweep, RunConfig, SweepSpec};
use stirap_cnot::dynamics::{evolve_lindblad, evolve_schrodinger, IntegratorConfig, LindbladModel};
use stirap_cnot::gateanalysis::{cnot, extract_gate, gate_from_results, run_basis_inputs, state_fidelity, truth_table, GateMatrix};
use stirap_cnot::pulses::{build_cnot_protocol, CavityParams, ProtocolSchedule};
use stirap_cnot::statespace::{build_space, ket, AtomLevel::*, HilbertSpace, StateVector};

fn default_point() -> (HilbertSpace, ProtocolSchedule, CavityParams) {
    (build_space(3).unwrap(), build_cnot_protocol(10.0, 1.0, 1.2, [0.0; 6]).unwrap(), CavityParams::symmetric(25.0).unwrap())
}

#[test]
fn single_lambda_step_transfers_11_to_1a() {
    let (space, mut s, cav) = default_point();
    s.steps.truncate(1);
    s.pulses.retain(|p| p.steps == vec![1]);
    s.end = s.steps[0].window.1;
    let psi = StateVector::basis(&space, &ket(G1, G1)).unwrap();
    let r = evolve_schrodinger(&space, &s, &cav, &psi, &IntegratorConfig::default()).unwrap();
    assert!(r.population(&space, &ket(G1, Ga)) >= 0.99);
}

#[test]
fn basis_examples_at_default_point() {
    let (space, s, cav) = default_point();
    let cfg = IntegratorConfig::default();
    let r = evolve_schrodinger(&space, &s, &cav, &StateVector::basis(&space, &ket(G1, G1)).unwrap(), &cfg).unwrap();
    assert!(r.population(&space, &ket(G1, G0)) >= 0.95);
    let r = evolve_schrodinger(&space, &s, &cav, &StateVector::basis(&space, &ket(G0, G0)).unwrap(), &cfg).unwrap();
    assert!(r.population(&space, &ket(G0, G0)) >= 0.95);
    assert!(r.max_drift <= 1e-8);
    assert!(r.steps.iter().all(|d| d.overlap > 0.95));
}

#[test]
fn bell_coherence() {
    let (space, s, cav) = default_point();
    let r = C64::new(FRAC_1_SQRT_2, 0.0);
    let input = StateVector::superposition(&space, &[(ket(G0, G0), r), (ket(G1, G1), r)]).unwrap();
    let target = StateVector::superposition(&space, &[(ket(G0, G0), r), (ket(G1, G0), r)]).unwrap();
    let out = evolve_schrodinger(&space, &s, &cav, &input, &IntegratorConfig::default()).unwrap();
    assert!(state_fidelity(&out.final_state, &target).unwrap() >= 0.95);
}

#[test]
fn closed_system_limit_of_lindblad() {
    let space = build_space(2).unwrap();
    let s = build_cnot_protocol(10.0, 1.0, 1.2, [0.0; 6]).unwrap();
    let cav = CavityParams::symmetric(25.0).unwrap();
    let cfg = IntegratorConfig::with_step(1.0 / 400.0);
    for input in [ket(G0, G1), ket(G1, G0)] {
        let psi = StateVector::basis(&space, &input).unwrap();
        let pure = evolve_schrodinger(&space, &s, &cav, &psi, &cfg).unwrap();
        let mixed = evolve_lindblad(&space, &s, &cav, &LindbladModel::default(), &psi, &cfg).unwrap();
        let (a, b) = (pure.final_state.diagonal(), mixed.final_state.diagonal());
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-6, "{input}: {diff}");
        assert!(mixed.max_drift <= 1e-6);
        assert!(mixed.min_eigenvalue.unwrap() >= -1e-8);
    }
}

#[test]
fn identity_without_pulses() {
    let (space, mut s, cav) = default_point();
    s.pulses.clear();
    let cfg = IntegratorConfig::with_step(0.05);
    let results = run_basis_inputs(&space, &s, &cav, None, &cfg).unwrap();
    let g = gate_from_results(&space, &results).unwrap();
    assert!(g.unitarity_deviation <= 1e-8);
    assert!(g.gate.max_abs_difference(&GateMatrix::identity()) <= 1e-8);
    let t = truth_table(&space, &results);
    assert_eq!(t.populations, GateMatrix::identity().truth_table());
    assert!(t.failed_rows.is_empty());
}

#[test]
fn truth_table_matches_gate_moduli() {
    let (space, s, cav) = default_point();
    let results = run_basis_inputs(&space, &s, &cav, None, &IntegratorConfig::default()).unwrap();
    let t = truth_table(&space, &results);
    let g = gate_from_results(&space, &results).unwrap();
    for (a, b) in t.populations.iter().flatten().zip(g.gate.truth_table().iter().flatten()) {
        assert!((a - b).abs() < 1e-14);
    }
    let (on, off) = t.cnot_margins();
    assert!(on >= 0.95 && off <= 0.05);
    assert!(!g.flagged);
}

#[test]
fn step_phases_are_periodic() {
    let space = build_space(2).unwrap();
    let cav = CavityParams::symmetric(25.0).unwrap();
    let cfg = IntegratorConfig::default();
    let a = extract_gate(&space, &build_cnot_protocol(10.0, 1.0, 1.2, [0.0; 6]).unwrap(), &cav, &cfg).unwrap();
    let b = extract_gate(&space, &build_cnot_protocol(10.0, 1.0, 1.2, [2.0 * PI; 6]).unwrap(), &cav, &cfg).unwrap();
    assert!(a.gate.max_abs_difference(&b.gate) <= 1e-6);
    assert!(stirap_cnot::gateanalysis::gate_fidelity(&a.gate, &cnot()) > 0.99);
}

#[test]
fn excited_population_suppressed_and_decreasing() {
    let space = build_space(2).unwrap();
    let cav = CavityParams::symmetric(25.0).unwrap();
    let cfg = IntegratorConfig::default();
    let worst = |omega: f64| {
        let s = build_cnot_protocol(omega, 1.0, 1.2, [0.0; 6]).unwrap();
        run_basis_inputs(&space, &s, &cav, None, &cfg).unwrap().iter().map(|r| r.max_excited).fold(0.0, f64::max)
    };
    let (p10, p20) = (worst(10.0), worst(20.0));
    assert!(p10 <= 0.05, "{p10}");
    assert!(p20 < p10, "{p20} vs {p10}");
}

#[test]
fn sweep_keeps_input_order_and_isolates_failures() {
    let base = RunConfig { n_max: 2, ..RunConfig::default() };
    let spec = SweepSpec::new("g_tp", vec![30.0, -1.0, 25.0], base).unwrap();
    let rows = run_sweep(&spec);
    assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), vec![30.0, -1.0, 25.0]);
    assert_eq!(rows[0].status, "ok");
    assert!(rows[1].status.contains("g_tp") && rows[1].retention_00.is_none());
    assert!(rows[2].exchange_10.unwrap() > 0.95);
    assert!(run_sweep(&SweepSpec::new("kappa_tp", vec![], RunConfig::default()).unwrap()).is_empty());
}

#[test]
fn step_halving_sweep_converges() {
    let base = RunConfig { n_max: 2, ..RunConfig::default() };
    let rows = run_sweep(&SweepSpec::new("h_tp", vec![1.0 / 100.0, 1.0 / 200.0, 1.0 / 400.0], base).unwrap());
    let v: Vec<f64> = rows.iter().map(|r| r.exchange_10.unwrap()).collect();
    let (d1, d2) = ((v[0] - v[1]).abs(), (v[1] - v[2]).abs());
    assert!(d2 < d1, "{d1} {d2}");
}
