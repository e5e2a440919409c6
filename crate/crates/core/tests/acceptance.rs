//! End-to-end acceptance run. One line per criterion; exits nonzero on any failure.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stirap_cnot::darkstates::{verify_dark_states, GEOMETRIC_BOUND, RESIDUAL_BOUND};
use stirap_cnot::dynamics::{
    evolve_schrodinger, ground_projectors, populations, IntegratorConfig, LindbladModel, ProtocolResult, NORM_TOLERANCE,
    TRACE_TOLERANCE,
};
use stirap_cnot::gateanalysis::{extract_gate, gate_fidelity, run_basis_inputs, state_fidelity, target_composition, truth_table};
use stirap_cnot::hamiltonian::{block_audit, cavity_step_couplings, interaction_hamiltonian};
use stirap_cnot::pulses::{build_cnot_protocol, merge_adjacent_pulses, CavityParams, ProtocolSchedule};
use stirap_cnot::statespace::{build_space, ket, AtomLevel::*, HilbertSpace, StateVector};

const DELAY: f64 = 1.2;
const LINDBLAD_STEP: f64 = 1.0 / 400.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, o: &Outcome) {
    println!("criterion {n:>2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn schedule(omega: f64, phases: [f64; 6]) -> ProtocolSchedule {
    build_cnot_protocol(omega, 1.0, DELAY, phases).expect("valid schedule")
}

fn basis_runs(n_max: usize, omega: f64, g: f64, h: f64, model: Option<&LindbladModel>) -> (HilbertSpace, [ProtocolResult; 4], Duration) {
    let space = build_space(n_max).unwrap();
    let cav = CavityParams::symmetric(g).unwrap();
    let t0 = Instant::now();
    let runs = run_basis_inputs(&space, &schedule(omega, [0.0; 6]), &cav, model, &IntegratorConfig::with_step(h)).expect("runs complete");
    (space, runs, t0.elapsed())
}

fn ground_populations(space: &HilbertSpace, runs: &[ProtocolResult; 4]) -> Vec<f64> {
    let projectors = ground_projectors();
    runs.iter().flat_map(|r| populations(space, &r.final_state, &projectors)).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_drift(runs: &[ProtocolResult]) -> f64 {
    runs.iter().map(|r| r.max_drift).fold(0.0, f64::max)
}

fn criterion1(space: &HilbertSpace, runs: &[ProtocolResult; 4], elapsed: Duration) -> Outcome {
    let (on, off) = truth_table(space, runs).cnot_margins();
    let secs = elapsed.as_secs_f64();
    Outcome {
        pass: on >= 0.95 && off <= 0.05 && secs <= 60.0,
        detail: format!("min designated {on:.5}, max off-target {off:.2e}, runtime {secs:.1} s"),
    }
}

struct Dissipative {
    retention: [f64; 2],
    exchange: [f64; 2],
    drift: f64,
    secs: f64,
}

fn dissipative(model: &LindbladModel) -> Dissipative {
    let (space, runs, elapsed) = basis_runs(3, 6.0, 26.0, LINDBLAD_STEP, Some(model));
    Dissipative {
        retention: [runs[0].population(&space, &ket(G0, G0)), runs[1].population(&space, &ket(G0, G1))],
        exchange: [runs[2].population(&space, &ket(G1, G1)), runs[3].population(&space, &ket(G1, G0))],
        drift: max_drift(&runs),
        secs: elapsed.as_secs_f64(),
    }
}

fn within(x: f64, centre: f64, tol: f64) -> bool {
    (x - centre).abs() <= tol
}

fn criterion2(strong: &Dissipative, weak: &Dissipative) -> Outcome {
    let ok = |d: &Dissipative, r: f64, e: f64, tol: f64| {
        d.retention.iter().all(|x| within(*x, r, tol)) && d.exchange.iter().all(|x| within(*x, e, tol)) && d.secs <= 600.0
    };
    let fmt = |d: &Dissipative| {
        format!(
            "retention {:.3}/{:.3} exchange {:.3}/{:.3} ({:.0} s)",
            d.retention[0], d.retention[1], d.exchange[0], d.exchange[1], d.secs
        )
    };
    Outcome {
        pass: ok(strong, 0.80, 0.90, 0.05) && ok(weak, 0.96, 0.92, 0.03),
        detail: format!("field decay 1e7/s: {}; 1e6/s: {}", fmt(strong), fmt(weak)),
    }
}

fn criteria3_4() -> (Outcome, Outcome) {
    let space = build_space(3).unwrap();
    let cav = CavityParams::symmetric(25.0).unwrap();
    let reports = verify_dark_states(&space, &schedule(10.0, [0.0; 6]), &cav, 41, 801).expect("dark-state checks run");
    let residual = reports.iter().map(|r| r.max_residual_ratio).fold(0.0, f64::max);
    let excited = reports.iter().map(|r| r.max_excited_amplitude).fold(0.0, f64::max);
    let h7 = reports.iter().find(|r| r.step == 2).and_then(|r| r.h7_kernel_dim);
    let c3 = Outcome {
        pass: residual <= RESIDUAL_BOUND && excited == 0.0 && h7 == Some(3),
        detail: format!("max |H phi|/|H| {residual:.1e}, excited amplitude {excited}, step-2 7-block kernel {h7:?}"),
    };
    let geometric = reports.iter().map(|r| r.geometric_max).fold(0.0, f64::max);
    let coarse = reports.iter().any(|r| r.grid_too_coarse);
    let c4 = Outcome {
        pass: geometric <= GEOMETRIC_BOUND && !coarse,
        detail: format!("max derivative coupling {geometric:.1e}, grid halving stable: {}", !coarse),
    };
    (c3, c4)
}

fn criterion5() -> Outcome {
    let space = build_space(3).unwrap();
    let s = schedule(10.0, [0.0; 6]);
    let a = s.step(2).and_then(|st| st.assignment()).expect("step 2 is a cavity step");
    let couplings = cavity_step_couplings(a, C64::new(0.83, 0.21), C64::new(1.37, -0.45));
    let h = interaction_hamiltonian(&space, &couplings, &CavityParams::new(2.3, 1.9).unwrap()).unwrap();
    let b = block_audit(&space, &h).unwrap();
    let dims = (b.h1.len(), b.h7.len(), b.h16.len());
    let a1_in_7 = b.h7.contains(&ket(Ga, G1));
    let a0_in_16 = b.h16.contains(&ket(Ga, G0)) && !b.h7.contains(&ket(Ga, G0));
    Outcome {
        pass: dims == (1, 7, 16) && a1_in_7 && a0_in_16,
        detail: format!("block sizes {dims:?}; |a1>|0> in 7-block: {a1_in_7}; |a0>|0> in 16-block only: {a0_in_16}"),
    }
}

fn criterion6(photons_g25: f64) -> Outcome {
    let (_, runs, _) = basis_runs(3, 10.0, 50.0, 1.0 / 200.0, None);
    let p50 = runs.iter().map(|r| r.max_photons_cavity_steps).fold(0.0, f64::max);
    let ratio = photons_g25 / p50;
    Outcome {
        pass: (3.5..=4.5).contains(&ratio),
        detail: format!("max <n> g=25: {photons_g25:.4}, g=50: {p50:.4}, ratio {ratio:.3}"),
    }
}

fn criterion7() -> Outcome {
    let space = build_space(3).unwrap();
    let cav = CavityParams::symmetric(100.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 1.0;
    for _ in 0..5 {
        let phases: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-PI..PI));
        let g = extract_gate(&space, &schedule(20.0, phases), &cav, &IntegratorConfig::default()).expect("gate extraction");
        worst = worst.min(gate_fidelity(&g.gate, &target_composition(phases)));
    }
    Outcome { pass: worst >= 0.99, detail: format!("worst fidelity over 5 tuples {worst:.5}") }
}

fn criterion8() -> Outcome {
    let space = build_space(3).unwrap();
    let cav = CavityParams::symmetric(25.0).unwrap();
    let cfg = IntegratorConfig::default();
    let plain = schedule(10.0, [0.0; 6]);
    let merged = merge_adjacent_pulses(&plain).unwrap();
    let a = extract_gate(&space, &plain, &cav, &cfg).unwrap();
    let b = extract_gate(&space, &merged, &cav, &cfg).unwrap();
    let f = gate_fidelity(&a.gate, &b.gate);
    Outcome { pass: f >= 0.999, detail: format!("{} pulses vs {}: fidelity {f:.5}", merged.pulse_count(), plain.pulse_count()) }
}

fn criterion9(space: &HilbertSpace, baseline: &[ProtocolResult; 4], lindblad_drift: f64) -> Outcome {
    let norm = max_drift(baseline);
    let reference = ground_populations(space, baseline);
    let (s, halved, _) = basis_runs(3, 10.0, 25.0, 1.0 / 400.0, None);
    let halving = max_diff(&reference, &ground_populations(&s, &halved));
    let (s, small, _) = basis_runs(2, 10.0, 25.0, 1.0 / 200.0, None);
    let truncation = max_diff(&reference, &ground_populations(&s, &small));
    Outcome {
        pass: norm <= NORM_TOLERANCE && lindblad_drift <= TRACE_TOLERANCE && halving <= 1e-6 && truncation <= 1e-4,
        detail: format!(
            "norm drift {norm:.1e}, trace drift {lindblad_drift:.1e}, halving {halving:.1e}, n_max 2 vs 3 {truncation:.1e}"
        ),
    }
}

fn criterion10() -> Outcome {
    let space = build_space(3).unwrap();
    let cav = CavityParams::symmetric(25.0).unwrap();
    let r = C64::new(FRAC_1_SQRT_2, 0.0);
    let input = StateVector::superposition(&space, &[(ket(G0, G0), r), (ket(G1, G1), r)]).unwrap();
    let target = StateVector::superposition(&space, &[(ket(G0, G0), r), (ket(G1, G0), r)]).unwrap();
    let out = evolve_schrodinger(&space, &schedule(10.0, [0.0; 6]), &cav, &input, &IntegratorConfig::default()).unwrap();
    let f = state_fidelity(&out.final_state, &target).unwrap();
    Outcome { pass: f >= 0.95, detail: format!("Bell fidelity {f:.5}") }
}

fn main() {
    let mut outcomes = Vec::new();

    let (space, baseline, elapsed) = basis_runs(3, 10.0, 25.0, 1.0 / 200.0, None);
    outcomes.push((1, criterion1(&space, &baseline, elapsed)));

    let strong = dissipative(&LindbladModel::from_field_decay(0.5));
    let weak = dissipative(&LindbladModel::from_field_decay(0.05));
    outcomes.push((2, criterion2(&strong, &weak)));
    for k in [0.5, 0.05] {
        let d = dissipative(&LindbladModel::cavity_only(k));
        println!(
            "    info: photon-number rate {k} (collapse sqrt(k) a): retention {:.3}/{:.3} exchange {:.3}/{:.3}",
            d.retention[0], d.retention[1], d.exchange[0], d.exchange[1]
        );
    }

    let (c3, c4) = criteria3_4();
    outcomes.push((3, c3));
    outcomes.push((4, c4));
    outcomes.push((5, criterion5()));
    let photons = baseline.iter().map(|r| r.max_photons_cavity_steps).fold(0.0, f64::max);
    outcomes.push((6, criterion6(photons)));
    outcomes.push((7, criterion7()));
    outcomes.push((8, criterion8()));
    outcomes.push((9, criterion9(&space, &baseline, strong.drift.max(weak.drift))));
    outcomes.push((10, criterion10()));

    outcomes.sort_by_key(|(n, _)| *n);
    for (n, o) in &outcomes {
        report(*n, o);
    }
    let failed = outcomes.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} of {} criteria pass", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
