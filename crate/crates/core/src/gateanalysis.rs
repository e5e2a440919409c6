//! Gate-level views of protocol runs.
//!
//! Matrices act on the ordered computational basis `|00>, |01>, |10>, |11>`
//! (zero photons). Comparisons quotient out the global phase.

use nalgebra::Matrix4;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::dynamics::{run_protocol, IntegratorConfig, LindbladModel, ProtocolResult, QuantumState};
use crate::error::{Error, Result};
use crate::pulses::{CavityParams, ProtocolSchedule};
use crate::statespace::{HilbertSpace, StateVector, COMPUTATIONAL};

/// Rows whose computational-subspace population falls below this are failed runs.
pub const LEAKAGE_FLOOR: f64 = 0.5;
/// Extracted gates with a larger `||U^dag U - I||` are flagged.
pub const UNITARITY_FLAG: f64 = 0.1;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct GateMatrix(pub Matrix4<C64>);

impl Serialize for GateMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..4).map(|r| (0..4).map(|c| [self.0[(r, c)].re, self.0[(r, c)].im]).collect()).collect();
        rows.serialize(s)
    }
}

impl GateMatrix {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn from_diagonal(d: [C64; 4]) -> Self {
        let mut m = Matrix4::zeros();
        for (i, z) in d.into_iter().enumerate() {
            m[(i, i)] = z;
        }
        Self(m)
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    /// `self` applied after `rhs`.
    pub fn compose(&self, rhs: &GateMatrix) -> GateMatrix {
        GateMatrix(self.0 * rhs.0)
    }

    pub fn adjoint(&self) -> GateMatrix {
        GateMatrix(self.0.adjoint())
    }

    /// Frobenius norm of `U^dag U - I`.
    pub fn unitarity_deviation(&self) -> f64 {
        (self.0.adjoint() * self.0 - Matrix4::identity()).norm()
    }

    /// Elementwise `|U_ij|^2` transposed into truth-table layout: row = input, column = output.
    pub fn truth_table(&self) -> [[f64; 4]; 4] {
        let mut t = [[0.0; 4]; 4];
        for (input, row) in t.iter_mut().enumerate() {
            for (output, v) in row.iter_mut().enumerate() {
                *v = self.0[(output, input)].norm_sqr();
            }
        }
        t
    }

    pub fn max_abs_difference(&self, other: &GateMatrix) -> f64 {
        (self.0 - other.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Flips the target (atom 2) when the control (atom 1) is `|1>`.
pub fn cnot() -> GateMatrix {
    let one = C64::new(1.0, 0.0);
    let mut m = Matrix4::zeros();
    m[(0, 0)] = one;
    m[(1, 1)] = one;
    m[(3, 2)] = one;
    m[(2, 3)] = one;
    GateMatrix(m)
}

/// Phase `e^{i phi}` on level `|1>` of atom 2.
pub fn phase_target(phi: f64) -> GateMatrix {
    let (one, p) = (C64::new(1.0, 0.0), C64::from_polar(1.0, phi));
    GateMatrix::from_diagonal([one, p, one, p])
}

/// Phase `e^{i phi}` on `|11>`.
pub fn controlled_phase(phi: f64) -> GateMatrix {
    let one = C64::new(1.0, 0.0);
    GateMatrix::from_diagonal([one, one, one, C64::from_polar(1.0, phi)])
}

/// Gate produced by the decorated protocol:
/// `Ph2(p6) . CP(p2 + p4) . CNOT . CP(p3 + p5) . Ph2(p1)`.
pub fn target_composition(phases: [f64; 6]) -> GateMatrix {
    let [p1, p2, p3, p4, p5, p6] = phases;
    phase_target(p6)
        .compose(&controlled_phase(p2 + p4))
        .compose(&cnot())
        .compose(&controlled_phase(p3 + p5))
        .compose(&phase_target(p1))
}

/// `|Tr(U^dag V)| / 4`.
pub fn gate_fidelity(u: &GateMatrix, v: &GateMatrix) -> f64 {
    (u.0.adjoint() * v.0).trace().norm() / 4.0
}

/// `|<target|psi>|^2` or `<target|rho|target>`.
pub fn state_fidelity(state: &QuantumState, target: &StateVector) -> Result<f64> {
    let dim = match state {
        QuantumState::Pure(p) => p.dim(),
        QuantumState::Mixed(r) => r.dim(),
    };
    if dim != target.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), got: dim });
    }
    Ok(state.fidelity_to(target))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthTable {
    /// Row = input, column = output, both in computational order.
    pub populations: [[f64; 4]; 4],
    /// Inputs whose row sums fell below the leakage floor.
    pub failed_rows: Vec<usize>,
}

impl TruthTable {
    pub fn row_sum(&self, row: usize) -> f64 {
        self.populations[row].iter().sum()
    }

    /// Smallest CNOT-designated entry and largest off-target entry.
    pub fn cnot_margins(&self) -> (f64, f64) {
        let target = cnot().truth_table();
        let mut min_on = f64::INFINITY;
        let mut max_off: f64 = 0.0;
        for (t, p) in target.iter().flatten().zip(self.populations.iter().flatten()) {
            if *t > 0.5 {
                min_on = min_on.min(*p);
            } else {
                max_off = max_off.max(*p);
            }
        }
        (min_on, max_off)
    }
}

pub fn truth_table(space: &HilbertSpace, results: &[ProtocolResult; 4]) -> TruthTable {
    truth_table_with_floor(space, results, LEAKAGE_FLOOR)
}

pub fn truth_table_with_floor(space: &HilbertSpace, results: &[ProtocolResult; 4], floor: f64) -> TruthTable {
    let mut populations = [[0.0; 4]; 4];
    let mut failed_rows = Vec::new();
    for (i, r) in results.iter().enumerate() {
        for (j, s) in COMPUTATIONAL.iter().enumerate() {
            populations[i][j] = r.final_state.population(space, s);
        }
        if populations[i].iter().sum::<f64>() < floor {
            failed_rows.push(i);
        }
    }
    TruthTable { populations, failed_rows }
}

/// Runs the protocol on the four computational inputs concurrently.
pub fn run_basis_inputs(
    space: &HilbertSpace,
    schedule: &ProtocolSchedule,
    cavity: &CavityParams,
    model: Option<&LindbladModel>,
    config: &IntegratorConfig,
) -> Result<[ProtocolResult; 4]> {
    let runs: Vec<Result<ProtocolResult>> = COMPUTATIONAL
        .par_iter()
        .map(|s| {
            let psi = StateVector::basis(space, s)?;
            run_protocol(space, schedule, cavity, model, &psi, config)
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(runs.try_into().expect("four inputs"))
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtractedGate {
    pub gate: GateMatrix,
    pub unitarity_deviation: f64,
    /// Set when the deviation exceeds [`UNITARITY_FLAG`].
    pub flagged: bool,
}

/// Computational-subspace block of the unitary evolution.
pub fn gate_from_results(space: &HilbertSpace, results: &[ProtocolResult; 4]) -> Result<ExtractedGate> {
    let mut m = Matrix4::zeros();
    for (col, r) in results.iter().enumerate() {
        let psi = r.final_state.as_pure().ok_or(Error::InvalidParameter {
            name: "engine",
            reason: "gate extraction needs the unitary engine".into(),
        })?;
        for (row, s) in COMPUTATIONAL.iter().enumerate() {
            m[(row, col)] = psi.amplitude(space, s);
        }
    }
    let gate = GateMatrix(m);
    let dev = gate.unitarity_deviation();
    Ok(ExtractedGate { gate, unitarity_deviation: dev, flagged: dev > UNITARITY_FLAG })
}

pub fn extract_gate(space: &HilbertSpace, schedule: &ProtocolSchedule, cavity: &CavityParams, config: &IntegratorConfig) -> Result<ExtractedGate> {
    let results = run_basis_inputs(space, schedule, cavity, None, config)?;
    gate_from_results(space, &results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &GateMatrix, b: &GateMatrix) -> bool {
        a.max_abs_difference(b) < 1e-14
    }

    #[test]
    fn zero_phases_give_cnot() {
        assert_eq!(target_composition([0.0; 6]), cnot());
    }

    #[test]
    fn controlled_phase_after_cnot() {
        let g = target_composition([0.0, PI / 2.0, 0.0, PI / 2.0, 0.0, 0.0]);
        assert!(close(&g, &controlled_phase(PI).compose(&cnot())));
        // |10> -> -|11>
        assert!((g.entry(3, 2) + 1.0).norm() < 1e-14);
        assert!((g.entry(2, 3) - 1.0).norm() < 1e-14);
    }

    #[test]
    fn target_phase_before_cnot() {
        let g = target_composition([PI, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut expected = cnot();
        for col in [1, 3] {
            for row in 0..4 {
                expected.0[(row, col)] = -expected.0[(row, col)];
            }
        }
        assert!(close(&g, &expected));
    }

    #[test]
    fn fidelity_examples() {
        let u = cnot();
        assert!((gate_fidelity(&u, &u) - 1.0).abs() < 1e-15);
        let mut shifted = u;
        shifted.0 *= C64::from_polar(1.0, 0.7);
        assert!((gate_fidelity(&u, &shifted) - 1.0).abs() < 1e-15);
        assert_eq!(gate_fidelity(&u, &GateMatrix::identity()), 0.5);
    }

    #[test]
    fn cnot_truth_table() {
        let t = cnot().truth_table();
        let expected = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0]];
        assert_eq!(t, expected);
        assert_eq!(GateMatrix::identity().unitarity_deviation(), 0.0);
        let mut leaky = cnot();
        leaky.0[(3, 2)] = C64::new(0.5, 0.0);
        assert!(leaky.unitarity_deviation() > UNITARITY_FLAG);
    }

    #[test]
    fn serializes_as_re_im_pairs() {
        let v = serde_json::to_value(cnot()).unwrap();
        assert_eq!(v[2][3], serde_json::json!([1.0, 0.0]));
        assert_eq!(v[0][1], serde_json::json!([0.0, 0.0]));
    }
}
