//! Interaction-picture Hamiltonian at exact resonance.
//!
//! `H = sum_i [ Omega_i(t) |e_i><L_i| + g_i a |e_i><1_i| ] + (u-laser terms) + h.c.`
//!
//! Laser and cavity frequencies coincide with the atomic transition, so the
//! frame rotation is diagonal and leaves zero-photon ground states alone;
//! only the rotating-frame coupling is ever assembled.

use std::collections::VecDeque;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::pulses::{CavityParams, Coupling, Drive, LAssignment};
use crate::statespace::{
    diagonal, Atom, AtomLevel, BasisState, CMatrix, CVector, HilbertSpace, Operator,
};

/// Nonzero matrix elements `(row, col, value)`, duplicates allowed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseOperator {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseOperator {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn to_dense(&self) -> Operator {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        Operator(m)
    }

    /// `y = self * x`
    pub fn apply_into(&self, x: &CVector, y: &mut CVector) {
        y.fill(C64::new(0.0, 0.0));
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
    }

    pub fn apply(&self, x: &CVector) -> CVector {
        let mut y = CVector::zeros(self.dim);
        self.apply_into(x, &mut y);
        y
    }

    /// `out = self * m`
    pub fn mul_dense_into(&self, m: &CMatrix, out: &mut CMatrix) {
        out.fill(C64::new(0.0, 0.0));
        let n = m.ncols();
        for &(r, c, v) in &self.entries {
            for j in 0..n {
                out[(r, j)] += v * m[(c, j)];
            }
        }
    }

    fn push_hermitian_pair(&mut self, row: usize, col: usize, v: C64) {
        self.entries.push((row, col, v));
        self.entries.push((col, row, v.conj()));
    }
}

/// Precomputed index structure for fast assembly at many times.
#[derive(Clone, Debug)]
pub struct HamiltonianAssembler {
    dim: usize,
    cavity: Vec<(usize, usize, C64)>,
    transitions: Vec<(Transition, Vec<(usize, usize)>)>,
}

/// `(atom, upper, lower)` of a laser line.
type Transition = (Atom, AtomLevel, AtomLevel);

fn transition_pairs(space: &HilbertSpace, atom: Atom, upper: AtomLevel, lower: AtomLevel) -> Vec<(usize, usize)> {
    space
        .states()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.level(atom) == lower)
        .map(|(col, s)| (space.index_of(&s.with_level(atom, upper)).expect("same photons"), col))
        .collect()
}

/// `g_i a |e_i><1_i| + h.c.` entries for both atoms.
fn cavity_entries(space: &HilbertSpace, cavity: &CavityParams) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for atom in Atom::BOTH {
        let g = cavity.get(atom);
        if g == 0.0 {
            continue;
        }
        for (col, s) in space.states().iter().enumerate() {
            if s.level(atom) == AtomLevel::G1 && s.photons > 0 {
                let target = BasisState { photons: s.photons - 1, ..s.with_level(atom, AtomLevel::E) };
                let row = space.index_of(&target).expect("lowered state in range");
                let v = C64::new(g * (s.photons as f64).sqrt(), 0.0);
                out.push((row, col, v));
                out.push((col, row, v.conj()));
            }
        }
    }
    out
}

impl HamiltonianAssembler {
    pub fn new(space: &HilbertSpace, cavity: &CavityParams) -> Self {
        use AtomLevel::*;
        let mut transitions = Vec::new();
        for atom in Atom::BOTH {
            for (upper, lower) in [(E, G0), (E, Ga), (U, Ga), (U, G1)] {
                transitions.push(((atom, upper, lower), transition_pairs(space, atom, upper, lower)));
            }
        }
        Self { dim: space.dim(), cavity: cavity_entries(space, cavity), transitions }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn assemble(&self, couplings: &[Coupling]) -> Result<SparseOperator> {
        let mut h = SparseOperator { dim: self.dim, entries: self.cavity.clone() };
        for c in couplings {
            Drive::new(c.atom, c.upper, c.lower)?;
            if c.amplitude == C64::new(0.0, 0.0) {
                continue;
            }
            let pairs = &self
                .transitions
                .iter()
                .find(|(key, _)| *key == (c.atom, c.upper, c.lower))
                .expect("every laser transition is indexed")
                .1;
            for &(row, col) in pairs {
                h.push_hermitian_pair(row, col, c.amplitude);
            }
        }
        Ok(h)
    }
}

/// Dense `H_I` for the given laser couplings and cavity strengths.
pub fn interaction_hamiltonian(space: &HilbertSpace, couplings: &[Coupling], cavity: &CavityParams) -> Result<Operator> {
    Ok(HamiltonianAssembler::new(space, cavity).assemble(couplings)?.to_dense())
}

/// Cavity coupling alone.
pub fn cavity_hamiltonian(space: &HilbertSpace, cavity: &CavityParams) -> Operator {
    SparseOperator { dim: space.dim(), entries: cavity_entries(space, cavity) }.to_dense()
}

/// Three-level lambda Hamiltonian through `u` on one atom:
/// `Omega_1 |u><1| + exp(-i phi) Omega_a |u><a| + h.c.`
///
/// Its kernel on `span{|1>, |a>}` contains `Omega_a |1> - exp(i phi) Omega_1 |a>`.
pub fn lambda_hamiltonian(space: &HilbertSpace, atom: Atom, omega_1sti: C64, omega_asti: C64, phi: f64) -> Operator {
    let couplings = [
        Coupling { atom, upper: AtomLevel::U, lower: AtomLevel::G1, amplitude: omega_1sti },
        Coupling { atom, upper: AtomLevel::U, lower: AtomLevel::Ga, amplitude: C64::from_polar(1.0, -phi) * omega_asti },
    ];
    interaction_hamiltonian(space, &couplings, &CavityParams { g1: 0.0, g2: 0.0 }).expect("u<-1 and u<-a are laser lines")
}

/// Breadth-first closure of `seed` under the nonzero elements of `h`.
pub fn coupling_closure(space: &HilbertSpace, h: &Operator, seed: &BasisState) -> Result<Vec<BasisState>> {
    let start = space.checked_index(seed)?;
    if h.dim() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: h.dim() });
    }
    let mut seen = vec![false; space.dim()];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        order.push(space.states()[i]);
        for (j, seen_j) in seen.iter_mut().enumerate() {
            if !*seen_j && (h.0[(j, i)].norm() > 0.0 || h.0[(i, j)].norm() > 0.0) {
                *seen_j = true;
                queue.push_back(j);
            }
        }
    }
    Ok(order)
}

/// Union of closures, first-seen order preserved.
pub fn closure_union(space: &HilbertSpace, h: &Operator, seeds: &[BasisState]) -> Result<Vec<BasisState>> {
    let mut out: Vec<BasisState> = Vec::new();
    for seed in seeds {
        for s in coupling_closure(space, h, seed)? {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    Ok(out)
}

/// Cavity-step couplings at amplitudes `(omega1, omega2)` for an L assignment.
pub fn cavity_step_couplings(assignment: LAssignment, omega1: C64, omega2: C64) -> Vec<Coupling> {
    vec![
        Coupling { atom: Atom::First, upper: AtomLevel::E, lower: assignment.l1, amplitude: omega1 },
        Coupling { atom: Atom::Second, upper: AtomLevel::E, lower: assignment.l2, amplitude: omega2 },
    ]
}

/// States that the computational inputs reach during a cavity step.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockAudit {
    /// Closure of `|11>|0>`.
    pub h1: Vec<BasisState>,
    /// Closures of `|01>, |10>, |1a>, |a1>` (all with zero photons).
    pub h7: Vec<BasisState>,
    /// Closures of `|00>, |0a>, |a0>, |aa>` (all with zero photons).
    pub h16: Vec<BasisState>,
}

pub const H7_SEEDS: [BasisState; 4] = {
    use crate::statespace::ket;
    use AtomLevel::*;
    [ket(G0, G1), ket(G1, G0), ket(G1, Ga), ket(Ga, G1)]
};

pub const H16_SEEDS: [BasisState; 4] = {
    use crate::statespace::ket;
    use AtomLevel::*;
    [ket(G0, G0), ket(G0, Ga), ket(Ga, G0), ket(Ga, Ga)]
};

pub fn block_audit(space: &HilbertSpace, h: &Operator) -> Result<BlockAudit> {
    use crate::statespace::ket;
    Ok(BlockAudit {
        h1: coupling_closure(space, h, &ket(AtomLevel::G1, AtomLevel::G1))?,
        h7: closure_union(space, h, &H7_SEEDS)?,
        h16: closure_union(space, h, &H16_SEEDS)?,
    })
}

/// `a^dagger a - |1><1|_1 - |1><1|_2`, conserved by every cavity-step Hamiltonian.
pub fn cavity_step_charge(space: &HilbertSpace) -> Operator {
    diagonal(space, |s| {
        s.photons as f64 - [s.atom1, s.atom2].iter().filter(|l| **l == AtomLevel::G1).count() as f64
    })
}

/// `a^dagger a + |e><e|_1 + |e><e|_2`, the frame-rotation generator; conserved
/// by the cavity coupling alone.
pub fn excitation_number(space: &HilbertSpace) -> Operator {
    diagonal(space, |s| {
        s.photons as f64 + [s.atom1, s.atom2].iter().filter(|l| **l == AtomLevel::E).count() as f64
    })
}

pub fn commutator_norm(a: &Operator, b: &Operator) -> f64 {
    (&a.0 * &b.0 - &b.0 * &a.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `<row|H|col>` lookup by labels.
pub fn element(space: &HilbertSpace, h: &Operator, row: &BasisState, col: &BasisState) -> Result<C64> {
    Ok(h.0[(space.checked_index(row)?, space.checked_index(col)?)])
}
