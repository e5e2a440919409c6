//! Composite Hilbert space of two five-level atoms and one truncated cavity mode.
//!
//! Basis ordering is lexicographic in (atom 1 level, atom 2 level, photon
//! number), with atomic levels ordered `0, a, 1, e, u`. The flat index of
//! `|s1 s2>|n>` is `(5 * s1 + s2) * (n_max + 1) + n`. This ordering is part
//! of the file formats written by the CLI and must not change.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Smallest truncation that can represent `|11>|2>`.
pub const MIN_N_MAX: usize = 2;
pub const DEFAULT_N_MAX: usize = 3;

/// One of the five atomic levels: ground `0`, `a`, `1` and excited `e`, `u`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AtomLevel {
    G0,
    Ga,
    G1,
    E,
    U,
}

impl AtomLevel {
    pub const ALL: [AtomLevel; 5] = [Self::G0, Self::Ga, Self::G1, Self::E, Self::U];
    pub const GROUND: [AtomLevel; 3] = [Self::G0, Self::Ga, Self::G1];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_ground(self) -> bool {
        matches!(self, Self::G0 | Self::Ga | Self::G1)
    }

    pub fn is_excited(self) -> bool {
        !self.is_ground()
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::G0 => "0",
            Self::Ga => "a",
            Self::G1 => "1",
            Self::E => "e",
            Self::U => "u",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.label() == s)
    }
}

impl fmt::Display for AtomLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Which of the two atoms in the register.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Atom {
    First,
    Second,
}

impl Atom {
    pub const BOTH: [Atom; 2] = [Atom::First, Atom::Second];

    pub fn number(self) -> usize {
        match self {
            Atom::First => 1,
            Atom::Second => 2,
        }
    }

    pub fn other(self) -> Atom {
        match self {
            Atom::First => Atom::Second,
            Atom::Second => Atom::First,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// `|atom1 atom2>|photons>`
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisState {
    pub atom1: AtomLevel,
    pub atom2: AtomLevel,
    pub photons: usize,
}

impl BasisState {
    pub const fn new(atom1: AtomLevel, atom2: AtomLevel, photons: usize) -> Self {
        Self { atom1, atom2, photons }
    }

    pub fn level(&self, atom: Atom) -> AtomLevel {
        match atom {
            Atom::First => self.atom1,
            Atom::Second => self.atom2,
        }
    }

    pub fn with_level(mut self, atom: Atom, level: AtomLevel) -> Self {
        match atom {
            Atom::First => self.atom1 = level,
            Atom::Second => self.atom2 = level,
        }
        self
    }

    pub fn has_excitation(&self) -> bool {
        self.atom1.is_excited() || self.atom2.is_excited()
    }

    /// Parses the compact form `"<s1><s2>"` or `"<s1><s2>,<n>"`, e.g. `"1a"` or `"11,2"`.
    pub fn parse(s: &str) -> Option<Self> {
        let (atoms, photons) = match s.split_once(',') {
            Some((a, n)) => (a, n.trim().parse().ok()?),
            None => (s, 0),
        };
        let mut chars = atoms.trim().chars();
        let a1 = AtomLevel::from_label(&chars.next()?.to_string())?;
        let a2 = AtomLevel::from_label(&chars.next()?.to_string())?;
        if chars.next().is_some() {
            return None;
        }
        Some(Self::new(a1, a2, photons))
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}{}>|{}>", self.atom1, self.atom2, self.photons)
    }
}

/// Shorthand for zero-photon two-atom states, `ket(G1, Ga)` is `|1a>|0>`.
pub const fn ket(atom1: AtomLevel, atom2: AtomLevel) -> BasisState {
    BasisState::new(atom1, atom2, 0)
}

/// The four computational inputs `|00>, |01>, |10>, |11>` with an empty cavity.
pub const COMPUTATIONAL: [BasisState; 4] = [
    ket(AtomLevel::G0, AtomLevel::G0),
    ket(AtomLevel::G0, AtomLevel::G1),
    ket(AtomLevel::G1, AtomLevel::G0),
    ket(AtomLevel::G1, AtomLevel::G1),
];

#[derive(Clone, Debug, PartialEq)]
pub struct HilbertSpace {
    n_max: usize,
    states: Vec<BasisState>,
}

impl HilbertSpace {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < MIN_N_MAX {
            return Err(Error::TruncationTooSmall(n_max));
        }
        let mut states = Vec::with_capacity(25 * (n_max + 1));
        for a1 in AtomLevel::ALL {
            for a2 in AtomLevel::ALL {
                for n in 0..=n_max {
                    states.push(BasisState::new(a1, a2, n));
                }
            }
        }
        Ok(Self { n_max, states })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn state_at(&self, index: usize) -> Option<BasisState> {
        self.states.get(index).copied()
    }

    pub fn index_of(&self, s: &BasisState) -> Option<usize> {
        (s.photons <= self.n_max)
            .then(|| (5 * s.atom1.index() + s.atom2.index()) * (self.n_max + 1) + s.photons)
    }

    pub fn checked_index(&self, s: &BasisState) -> Result<usize> {
        self.index_of(s).ok_or(Error::StateOutOfRange(*s))
    }

    pub fn identity(&self) -> Operator {
        Operator(CMatrix::identity(self.dim(), self.dim()))
    }

    pub fn zero_operator(&self) -> Operator {
        Operator(CMatrix::zeros(self.dim(), self.dim()))
    }

    /// Indices of a subset, rejecting out-of-range and repeated entries.
    pub fn subset_indices(&self, subset: &[BasisState]) -> Result<Vec<usize>> {
        let mut seen = vec![false; self.dim()];
        subset
            .iter()
            .map(|s| {
                let i = self.checked_index(s)?;
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::DuplicateState(*s));
                }
                Ok(i)
            })
            .collect()
    }
}

pub fn build_space(n_max: usize) -> Result<HilbertSpace> {
    HilbertSpace::new(n_max)
}

/// Dense operator on a [`HilbertSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(pub CMatrix);

impl Operator {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn adjoint(&self) -> Operator {
        Operator(self.0.adjoint())
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let m = &self.0;
        let mut worst = 0.0_f64;
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn nonzero_count(&self) -> usize {
        self.0.iter().filter(|z| **z != C64::new(0.0, 0.0)).count()
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        StateVector(&self.0 * &psi.0)
    }

    /// Spectral norm (largest singular value).
    pub fn spectral_norm(&self) -> f64 {
        if self.0.iter().all(|z| z.norm_sqr() == 0.0) {
            return 0.0;
        }
        self.0
            .clone()
            .singular_values()
            .iter()
            .fold(0.0_f64, |a, &b| a.max(b))
    }
}

/// Cavity annihilation operator `a`, with `a|n> = sqrt(n)|n-1>`.
pub fn annihilation(space: &HilbertSpace) -> Operator {
    let mut m = CMatrix::zeros(space.dim(), space.dim());
    for (col, s) in space.states().iter().enumerate() {
        if s.photons > 0 {
            let lowered = BasisState { photons: s.photons - 1, ..*s };
            let row = space.index_of(&lowered).expect("lowered state in range");
            m[(row, col)] = C64::new((s.photons as f64).sqrt(), 0.0);
        }
    }
    Operator(m)
}

pub fn creation(space: &HilbertSpace) -> Operator {
    annihilation(space).adjoint()
}

/// `a^dagger a`.
pub fn photon_number(space: &HilbertSpace) -> Operator {
    diagonal(space, |s| s.photons as f64)
}

pub fn diagonal(space: &HilbertSpace, f: impl Fn(&BasisState) -> f64) -> Operator {
    let d = CVector::from_iterator(space.dim(), space.states().iter().map(|s| C64::new(f(s), 0.0)));
    Operator(CMatrix::from_diagonal(&d))
}

/// Projector `|level><level|` on one atom, identity on the rest.
pub fn level_projector(space: &HilbertSpace, atom: Atom, level: AtomLevel) -> Operator {
    diagonal(space, |s| if s.level(atom) == level { 1.0 } else { 0.0 })
}

/// `|upper><lower|` acting on `atom`, identity on the other atom and the cavity.
pub fn atomic_transition(
    space: &HilbertSpace,
    atom: Atom,
    upper: AtomLevel,
    lower: AtomLevel,
) -> Result<Operator> {
    if !upper.is_excited() || !lower.is_ground() {
        return Err(Error::InvalidTransition { upper, lower });
    }
    Ok(level_flip(space, atom, upper, lower))
}

/// `|to><from|` on one atom, no restriction on the levels.
pub(crate) fn level_flip(space: &HilbertSpace, atom: Atom, to: AtomLevel, from: AtomLevel) -> Operator {
    let mut m = CMatrix::zeros(space.dim(), space.dim());
    for (col, s) in space.states().iter().enumerate() {
        if s.level(atom) == from {
            let row = space.index_of(&s.with_level(atom, to)).expect("same photon number");
            m[(row, col)] = C64::new(1.0, 0.0);
        }
    }
    Operator(m)
}

/// Principal submatrix on `subset`, in the order given.
pub fn restrict_operator(space: &HilbertSpace, op: &Operator, subset: &[BasisState]) -> Result<CMatrix> {
    check_dim(space, op.dim())?;
    let idx = space.subset_indices(subset)?;
    Ok(CMatrix::from_fn(idx.len(), idx.len(), |i, j| op.0[(idx[i], idx[j])]))
}

pub fn restrict_state(space: &HilbertSpace, psi: &StateVector, subset: &[BasisState]) -> Result<CVector> {
    check_dim(space, psi.dim())?;
    let idx = space.subset_indices(subset)?;
    Ok(CVector::from_iterator(idx.len(), idx.iter().map(|&i| psi.0[i])))
}

/// Inverse of [`restrict_state`]: zero outside `subset`.
pub fn embed_state(space: &HilbertSpace, subset: &[BasisState], amplitudes: &CVector) -> Result<StateVector> {
    if amplitudes.len() != subset.len() {
        return Err(Error::DimensionMismatch { expected: subset.len(), got: amplitudes.len() });
    }
    let idx = space.subset_indices(subset)?;
    let mut v = CVector::zeros(space.dim());
    for (k, &i) in idx.iter().enumerate() {
        v[i] = amplitudes[k];
    }
    Ok(StateVector(v))
}

fn check_dim(space: &HilbertSpace, got: usize) -> Result<()> {
    if got == space.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: space.dim(), got })
    }
}

/// Pure state; amplitudes indexed by the space's basis ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub CVector);

impl StateVector {
    pub fn basis(space: &HilbertSpace, s: &BasisState) -> Result<Self> {
        let mut v = CVector::zeros(space.dim());
        v[space.checked_index(s)?] = C64::new(1.0, 0.0);
        Ok(Self(v))
    }

    /// Normalized superposition `sum_k c_k |s_k>`.
    pub fn superposition(space: &HilbertSpace, terms: &[(BasisState, C64)]) -> Result<Self> {
        let mut v = CVector::zeros(space.dim());
        for (s, c) in terms {
            v[space.checked_index(s)?] += *c;
        }
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::InvalidParameter { name: "superposition", reason: "zero vector".into() });
        }
        Ok(Self(v.unscale(n)))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn amplitude(&self, space: &HilbertSpace, s: &BasisState) -> C64 {
        space.index_of(s).map_or(C64::new(0.0, 0.0), |i| self.0[i])
    }

    pub fn population(&self, space: &HilbertSpace, s: &BasisState) -> f64 {
        self.amplitude(space, s).norm_sqr()
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.0.dotc(&other.0)
    }
}

/// Mixed state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(pub CMatrix);

impl DensityMatrix {
    pub fn from_pure(psi: &StateVector) -> Self {
        Self(&psi.0 * psi.0.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn population(&self, space: &HilbertSpace, s: &BasisState) -> f64 {
        space.index_of(s).map_or(0.0, |i| self.0[(i, i)].re)
    }

    /// Smallest eigenvalue of the Hermitian part.
    ///
    /// Computed as `eig(rho + I) - 1`: the shift removes the strongly graded
    /// diagonal of nearly pure states, on which the unshifted QR iteration can
    /// break down; the absolute accuracy stays near machine epsilon.
    pub fn min_eigenvalue(&self) -> f64 {
        let one = C64::new(1.0, 0.0);
        let mut h = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        for i in 0..self.dim() {
            h[(i, i)] += one;
        }
        h.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b)) - 1.0
    }

    /// Checks Hermiticity, unit trace and positivity, each within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let herm = Operator(self.0.clone()).hermiticity_defect();
        if herm > tol {
            return Err(Error::InvalidParameter { name: "density_matrix", reason: format!("not Hermitian (defect {herm:.3e})") });
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidParameter { name: "density_matrix", reason: format!("trace {tr} differs from 1") });
        }
        let min = self.min_eigenvalue();
        if min < -tol {
            return Err(Error::InvalidParameter { name: "density_matrix", reason: format!("negative eigenvalue {min:.3e}") });
        }
        Ok(())
    }
}
