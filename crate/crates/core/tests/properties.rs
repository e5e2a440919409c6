use nalgebra::Matrix4;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use stirap_cnot::darkstates::{cavity_step_dark_states, dark_sti_complex, embed_sti, RESIDUAL_BOUND};
use stirap_cnot::dynamics::{populations, ground_projectors, QuantumState};
use stirap_cnot::gateanalysis::{gate_fidelity, target_composition, GateMatrix};
use stirap_cnot::hamiltonian::{cavity_step_couplings, interaction_hamiltonian, lambda_hamiltonian};
use stirap_cnot::pulses::{CavityParams, Coupling, LAssignment};
use stirap_cnot::statespace::{build_space, Atom, AtomLevel, StateVector};

fn complex() -> impl Strategy<Value = C64> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn unitary() -> impl Strategy<Value = GateMatrix> {
    proptest::collection::vec(-1.0..1.0f64, 32).prop_filter_map("singular draw", |v| {
        let m = Matrix4::from_fn(|r, c| C64::new(v[8 * r + 2 * c], v[8 * r + 2 * c + 1]));
        if m.determinant().norm() < 1e-3 {
            return None;
        }
        Some(GateMatrix(m.qr().q()))
    })
}

const DRIVES: [(AtomLevel, AtomLevel); 4] =
    [(AtomLevel::E, AtomLevel::G0), (AtomLevel::E, AtomLevel::Ga), (AtomLevel::U, AtomLevel::Ga), (AtomLevel::U, AtomLevel::G1)];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_index_round_trip(n_max in 2usize..6, pick in 0usize..1000) {
        let space = build_space(n_max).unwrap();
        prop_assert_eq!(space.dim(), 25 * (n_max + 1));
        let i = pick % space.dim();
        let s = space.state_at(i).unwrap();
        prop_assert_eq!(space.index_of(&s), Some(i));
        prop_assert_eq!(i, (5 * s.atom1.index() + s.atom2.index()) * (n_max + 1) + s.photons);
    }

    #[test]
    fn hamiltonian_is_hermitian(amps in proptest::collection::vec(complex(), 8), g1 in 0.0..40.0f64, g2 in 0.0..40.0f64) {
        let space = build_space(3).unwrap();
        let mut couplings = Vec::new();
        for (k, atom) in Atom::BOTH.into_iter().enumerate() {
            for (j, (upper, lower)) in DRIVES.into_iter().enumerate() {
                couplings.push(Coupling { atom, upper, lower, amplitude: amps[4 * k + j] });
            }
        }
        let h = interaction_hamiltonian(&space, &couplings, &CavityParams::new(g1, g2).unwrap()).unwrap();
        prop_assert!(h.hermiticity_defect() < 1e-14);
    }

    #[test]
    fn cavity_dark_states_are_dark(o1 in complex(), o2 in complex(), g1 in 0.5..40.0f64, g2 in 0.5..40.0f64, which in 0usize..4) {
        prop_assume!(o1.norm() > 1e-3 || o2.norm() > 1e-3);
        let space = build_space(3).unwrap();
        let assignments = [
            LAssignment::new(AtomLevel::Ga, AtomLevel::G0),
            LAssignment::new(AtomLevel::G0, AtomLevel::Ga),
            LAssignment::new(AtomLevel::Ga, AtomLevel::Ga),
            LAssignment::new(AtomLevel::G0, AtomLevel::G0),
        ];
        let a = assignments[which];
        let cavity = CavityParams::new(g1, g2).unwrap();
        let h = interaction_hamiltonian(&space, &cavity_step_couplings(a, o1, o2), &cavity).unwrap();
        let norm = h.spectral_norm();
        for d in cavity_step_dark_states(o1, o2, &cavity, a).unwrap() {
            let v = d.to_vector(&space).unwrap();
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            prop_assert!(h.apply(&v).norm() <= RESIDUAL_BOUND * norm, "{} residual", d.label);
            prop_assert_eq!(d.excited_support(), 0.0);
        }
    }

    #[test]
    fn lambda_dark_state_is_dark(oa in 0.01..5.0f64, o1 in 0.01..5.0f64, phi in -6.3..6.3f64) {
        let space = build_space(2).unwrap();
        let omega_1 = C64::from_polar(o1, phi);
        let (c1, ca) = dark_sti_complex(C64::new(oa, 0.0), omega_1).unwrap();
        let d = embed_sti("sti", c1, ca, Atom::Second, AtomLevel::G1).unwrap();
        let h = lambda_hamiltonian(&space, Atom::Second, omega_1, C64::new(oa, 0.0), 0.0);
        prop_assert!(h.apply(&d.to_vector(&space).unwrap()).norm() <= 1e-12 * (oa + o1));
    }

    #[test]
    fn fidelity_symmetric_and_unitarily_invariant(u in unitary(), v in unitary(), w in unitary()) {
        let f = gate_fidelity(&u, &v);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        prop_assert!((f - gate_fidelity(&v, &u)).abs() < 1e-12);
        prop_assert!((f - gate_fidelity(&w.compose(&u), &w.compose(&v))).abs() < 1e-12);
    }

    #[test]
    fn composition_is_unitary_and_periodic(p in proptest::array::uniform6(-7.0..7.0f64), k in 0usize..6) {
        let g = target_composition(p);
        prop_assert!(g.unitarity_deviation() < 1e-12);
        let mut shifted = p;
        shifted[k] += 2.0 * std::f64::consts::PI;
        prop_assert!(g.max_abs_difference(&target_composition(shifted)) < 1e-12);
        let t = g.truth_table();
        for row in t {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn populations_bounded(amps in proptest::collection::vec(complex(), 9)) {
        prop_assume!(amps.iter().any(|z| z.norm() > 1e-3));
        let space = build_space(2).unwrap();
        let projectors = ground_projectors();
        let terms: Vec<_> = projectors.iter().map(|p| p.states[0]).zip(amps).collect();
        let psi = StateVector::superposition(&space, &terms).unwrap();
        let p = populations(&space, &QuantumState::Pure(psi), &projectors);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
