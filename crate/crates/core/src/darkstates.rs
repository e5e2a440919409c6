//! Analytic dark states of each protocol step and the checks around them.
//!
//! Cavity steps are described by the L/N assignment of the step: `L_i` is the
//! ground level of atom `i` driven by its laser and `N_i` the other one of
//! `{0, a}`. With complex laser amplitudes `O1`, `O2` and cavity couplings
//! `g1`, `g2` the zero-energy states connected to the computational inputs are
//!
//! * `|11>|0>` (decoupled)
//! * `|N1 1>|0>` and `|1 N2>|0>` (undriven)
//! * `g1 O2 |L1 1>|0> + g2 O1 |1 L2>|0> - O1 O2 |11>|1>`
//! * `O2 |N1 1>|1> - g2 |N1 L2>|0>`
//! * `O1 |1 N2>|1> - g1 |L1 N2>|0>`
//! * `|N1 N2>|0>`
//! * `sqrt2 g1 g2 |L1 L2>|0> - sqrt2 g2 O1 |1 L2>|1> - sqrt2 g1 O2 |L1 1>|1> + O1 O2 |11>|2>`
//!
//! Lambda steps follow `O_a |1> - O_1 |a>` on the addressed atom.

use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{interaction_hamiltonian, H16_SEEDS};
use crate::pulses::{active_couplings, CavityParams, Coupling, LAssignment, ProtocolSchedule, StepKind, StepSpec};
use crate::statespace::{ket, Atom, AtomLevel, BasisState, CMatrix, CVector, HilbertSpace, Operator, StateVector};

/// Relative singular-value threshold for [`numeric_kernel`].
pub const KERNEL_TOL: f64 = 1e-10;
/// Bound on `|H phi| / |H|` for analytic dark states.
pub const RESIDUAL_BOUND: f64 = 1e-10;
/// Bound on the derivative couplings of the dark family.
pub const GEOMETRIC_BOUND: f64 = 1e-8;
/// Relative change under grid halving above which a grid is flagged as coarse.
pub const HALVING_TOLERANCE: f64 = 0.1;
/// Differences below this are rounding noise and never flag a grid.
const HALVING_FLOOR: f64 = 1e-10;


fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Normalized sparse state `sum_k c_k |s_k>`.
#[derive(Clone, Debug, PartialEq)]
pub struct DarkState {
    pub label: String,
    pub terms: Vec<(BasisState, C64)>,
}

impl DarkState {
    fn normalized(label: impl Into<String>, terms: Vec<(BasisState, C64)>) -> Result<Self> {
        let norm = terms.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateDarkState);
        }
        Ok(Self { label: label.into(), terms: terms.into_iter().map(|(s, c)| (s, c / norm)).collect() })
    }

    pub fn amplitude(&self, s: &BasisState) -> C64 {
        self.terms.iter().filter(|(b, _)| b == s).map(|(_, c)| *c).sum()
    }

    pub fn to_vector(&self, space: &HilbertSpace) -> Result<StateVector> {
        let mut v = CVector::zeros(space.dim());
        for (s, c) in &self.terms {
            v[space.checked_index(s)?] += *c;
        }
        Ok(StateVector(v))
    }

    /// Largest amplitude on any basis state with an excited atom.
    pub fn excited_support(&self) -> f64 {
        self.terms.iter().filter(|(s, _)| s.has_excitation()).map(|(_, c)| c.norm()).fold(0.0, f64::max)
    }
}

/// Normalized `(c_1, c_a)` of `O_a |1> - e^{i phi} O_1 |a>`.
pub fn dark_sti(omega_asti: f64, omega_1sti: f64, phi: f64) -> Result<(C64, C64)> {
    dark_sti_complex(re(omega_asti), C64::from_polar(omega_1sti, phi))
}

/// Kernel of `O_1 |u><1| + O_a |u><a| + h.c.`: `O_a |1> - O_1 |a>`.
pub fn dark_sti_complex(omega_a: C64, omega_1: C64) -> Result<(C64, C64)> {
    let n = (omega_a.norm_sqr() + omega_1.norm_sqr()).sqrt();
    if !(n > 0.0) {
        return Err(Error::DegenerateDarkState);
    }
    Ok((omega_a / n, -omega_1 / n))
}

/// Lambda dark state of atom 2 embedded with atom 1 parked in `spectator`.
pub fn embed_sti(label: &str, c1: C64, ca: C64, atom: Atom, spectator: AtomLevel) -> Result<DarkState> {
    let base = ket(spectator, spectator);
    DarkState::normalized(
        label,
        vec![
            (base.with_level(atom, AtomLevel::G1), c1),
            (base.with_level(atom, AtomLevel::Ga), ca),
        ],
    )
}

/// `g1 O2 |L1 1>|0> + g2 O1 |1 L2>|0> - O1 O2 |11>|1>`.
pub fn dark_phi7_3(omega1: C64, omega2: C64, cavity: &CavityParams, a: LAssignment) -> Result<DarkState> {
    use AtomLevel::G1;
    DarkState::normalized(
        "phi7_3",
        vec![
            (ket(a.l1, G1), cavity.g1 * omega2),
            (ket(G1, a.l2), cavity.g2 * omega1),
            (BasisState::new(G1, G1, 1), -omega1 * omega2),
        ],
    )
}

/// `k`-th dark state of the 16-dimensional block, `k` in `2..=5`.
pub fn dark_phi16(k: usize, omega1: C64, omega2: C64, cavity: &CavityParams, a: LAssignment) -> Result<DarkState> {
    use AtomLevel::G1;
    let (g1, g2) = (cavity.g1, cavity.g2);
    let (l1, l2, n1, n2) = (a.l1, a.l2, a.n1(), a.n2());
    let terms = match k {
        2 => vec![(BasisState::new(n1, G1, 1), omega2), (ket(n1, l2), re(-g2))],
        3 => vec![(BasisState::new(G1, n2, 1), omega1), (ket(l1, n2), re(-g1))],
        4 => vec![(ket(n1, n2), re(1.0))],
        5 => vec![
            (ket(l1, l2), re(SQRT_2 * g1 * g2)),
            (BasisState::new(G1, l2, 1), -SQRT_2 * g2 * omega1),
            (BasisState::new(l1, G1, 1), -SQRT_2 * g1 * omega2),
            (BasisState::new(G1, G1, 2), omega1 * omega2),
        ],
        _ => return Err(Error::InvalidParameter { name: "k", reason: format!("dark state index must be 2..=5 (got {k})") }),
    };
    DarkState::normalized(format!("phi16_{k}"), terms)
}

/// All dark states connected to the computational inputs during a cavity step.
pub fn cavity_step_dark_states(omega1: C64, omega2: C64, cavity: &CavityParams, a: LAssignment) -> Result<Vec<DarkState>> {
    use AtomLevel::G1;
    let mut out = vec![
        DarkState::normalized("phi1_1", vec![(ket(G1, G1), re(1.0))])?,
        DarkState::normalized("phi7_1", vec![(ket(a.n1(), G1), re(1.0))])?,
        DarkState::normalized("phi7_2", vec![(ket(G1, a.n2()), re(1.0))])?,
        dark_phi7_3(omega1, omega2, cavity, a)?,
    ];
    for k in 2..=5 {
        out.push(dark_phi16(k, omega1, omega2, cavity, a)?);
    }
    Ok(out)
}

/// Dark states of a lambda step on `atom` for both spectator levels of the other atom.
pub fn lambda_step_dark_states(omega_a: C64, omega_1: C64, atom: Atom) -> Result<Vec<DarkState>> {
    let (c1, ca) = dark_sti_complex(omega_a, omega_1)?;
    let mut out = Vec::new();
    for spectator in [AtomLevel::G0, AtomLevel::G1] {
        out.push(embed_sti(&format!("sti_{spectator}"), c1, ca, atom, spectator)?);
        let idle = ket(spectator, spectator).with_level(atom, AtomLevel::G0);
        out.push(DarkState::normalized(format!("idle_{spectator}"), vec![(idle, re(1.0))])?);
    }
    Ok(out)
}

fn amplitude_on(couplings: &[Coupling], atom: Atom, upper: AtomLevel, lower: AtomLevel) -> C64 {
    couplings
        .iter()
        .filter(|c| c.atom == atom && c.upper == upper && c.lower == lower)
        .map(|c| c.amplitude)
        .sum()
}

/// Analytic dark states of `step` at time `t`, evaluated from the active couplings.
pub fn step_dark_states(schedule: &ProtocolSchedule, cavity: &CavityParams, step: &StepSpec, t: f64) -> Result<Vec<DarkState>> {
    let couplings = active_couplings(schedule, t);
    match step.kind {
        StepKind::CavityStirap => {
            let a = step.assignment().expect("cavity step has an assignment");
            let o1 = amplitude_on(&couplings, Atom::First, AtomLevel::E, a.l1);
            let o2 = amplitude_on(&couplings, Atom::Second, AtomLevel::E, a.l2);
            cavity_step_dark_states(o1, o2, cavity, a)
        }
        StepKind::LambdaStirap => {
            let atom = step.first.atom;
            let oa = amplitude_on(&couplings, atom, AtomLevel::U, AtomLevel::Ga);
            let o1 = amplitude_on(&couplings, atom, AtomLevel::U, AtomLevel::G1);
            lambda_step_dark_states(oa, o1, atom)
        }
    }
}

/// Orthonormal basis of the numerical null space of `h`.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub basis: Vec<CVector>,
    pub singular_values: Vec<f64>,
}

impl Kernel {
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    /// Norm of the projection of `v` onto the kernel.
    pub fn projection_norm(&self, v: &CVector) -> f64 {
        self.basis.iter().map(|k| k.dotc(v).norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Right singular vectors whose singular value is below `tol` times the largest.
pub fn numeric_kernel(h: &CMatrix, tol: f64) -> Kernel {
    let svd = h.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let top = sigma.iter().copied().fold(0.0, f64::max);
    let mut basis: Vec<CVector> = Vec::new();
    for (i, &s) in sigma.iter().enumerate() {
        if top == 0.0 || s <= tol * top {
            basis.push(v_t.row(i).adjoint());
        }
    }
    Kernel { basis, singular_values: sigma }
}

/// Time-sampled orthonormal dark vectors with a smooth gauge.
#[derive(Clone, Debug)]
pub struct DarkFamily {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// `vectors[j][k]` is vector `k` at time `times[j]`.
    pub vectors: Vec<Vec<CVector>>,
}

impl DarkFamily {
    pub fn new(times: Vec<f64>, labels: Vec<String>, mut vectors: Vec<Vec<CVector>>) -> Self {
        // make successive overlaps real and positive
        for j in 1..vectors.len() {
            let (prev, rest) = vectors.split_at_mut(j);
            for (k, v) in rest[0].iter_mut().enumerate() {
                let ov = prev[j - 1][k].dotc(v);
                if ov.norm() > 0.0 {
                    *v *= ov.conj() / ov.norm();
                }
            }
        }
        Self { times, labels, vectors }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn width(&self) -> usize {
        self.labels.len()
    }

    fn decimated(&self) -> DarkFamily {
        let take = |i: usize| i.is_multiple_of(2);
        DarkFamily {
            times: self.times.iter().enumerate().filter(|(i, _)| take(*i)).map(|(_, t)| *t).collect(),
            labels: self.labels.clone(),
            vectors: self.vectors.iter().enumerate().filter(|(i, _)| take(*i)).map(|(_, v)| v.clone()).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeometricCouplings {
    /// `max_t |<v_k'(t)| d/dt |v_k(t)>|`, row `k'`, column `k`.
    pub sup: DMatrix<f64>,
    /// Same quantity on the grid with twice the spacing.
    pub sup_coarse: DMatrix<f64>,
    /// Set when the two grids disagree beyond the halving tolerance.
    pub too_coarse: bool,
}

impl GeometricCouplings {
    pub fn max(&self) -> f64 {
        self.sup.max()
    }
}

fn coupling_sup(family: &DarkFamily) -> DMatrix<f64> {
    let w = family.width();
    let mut sup = DMatrix::<f64>::zeros(w, w);
    for j in 1..family.len().saturating_sub(1) {
        let dt = family.times[j + 1] - family.times[j - 1];
        let mut d = CMatrix::zeros(w, w);
        for kp in 0..w {
            for k in 0..w {
                let diff = &family.vectors[j + 1][k] - &family.vectors[j - 1][k];
                d[(kp, k)] = family.vectors[j][kp].dotc(&diff) / dt;
            }
        }
        // the exact couplings of an orthonormal family are anti-Hermitian;
        // the Hermitian part of a centered difference is pure curvature error
        let a = (&d - d.adjoint()) * re(0.5);
        for kp in 0..w {
            for k in 0..w {
                sup[(kp, k)] = sup[(kp, k)].max(a[(kp, k)].norm());
            }
        }
    }
    sup
}

/// Suprema of the derivative couplings over the grid, with a grid-halving check.
pub fn geometric_couplings(family: &DarkFamily) -> GeometricCouplings {
    let sup = coupling_sup(family);
    let sup_coarse = coupling_sup(&family.decimated());
    let too_coarse = sup.iter().zip(sup_coarse.iter()).any(|(a, b)| {
        let diff = (a - b).abs();
        diff > HALVING_FLOOR && diff > HALVING_TOLERANCE * a.max(*b)
    });
    GeometricCouplings { sup, sup_coarse, too_coarse }
}

/// Dark family of one protocol step on `samples` evenly spaced times across its window.
pub fn step_dark_family(
    space: &HilbertSpace,
    schedule: &ProtocolSchedule,
    cavity: &CavityParams,
    step: &StepSpec,
    samples: usize,
) -> Result<DarkFamily> {
    let (t0, t1) = step.window;
    let samples = samples.max(3);
    let mut times = Vec::with_capacity(samples);
    let mut vectors = Vec::with_capacity(samples);
    let mut labels = Vec::new();
    for j in 0..samples {
        let t = t0 + (t1 - t0) * j as f64 / (samples - 1) as f64;
        let states = step_dark_states(schedule, cavity, step, t)?;
        if labels.is_empty() {
            labels = states.iter().map(|s| s.label.clone()).collect();
        }
        vectors.push(states.iter().map(|s| s.to_vector(space).map(|v| v.0)).collect::<Result<Vec<_>>>()?);
        times.push(t);
    }
    Ok(DarkFamily::new(times, labels, vectors))
}

/// How a step acts on one zero-photon ground input.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionKind {
    /// Moved adiabatically to another basis state.
    Transfer,
    /// Follows a dark state that starts and ends on the input.
    Return,
    /// Not coupled by the step.
    Spectator,
    /// Coupled, but not in the counterintuitive order; no adiabatic prediction.
    Unconnected,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct Connection {
    pub output: BasisState,
    /// Phase picked up along the connection.
    pub phase: f64,
    pub kind: ConnectionKind,
}

impl Connection {
    fn identity(input: BasisState, kind: ConnectionKind) -> Self {
        Self { output: input, phase: 0.0, kind }
    }
}

/// Symbolic adiabatic connection of `input` through `step`.
///
/// Transfers go from the branch driven by the second pulse to the branch
/// driven by the first and pick up the relative phase of the two pulses
/// (minus the fixed pi of the lambda steps).
pub fn expected_connection(step: &StepSpec, input: &BasisState) -> Connection {
    use AtomLevel::*;
    use ConnectionKind::*;
    if input.photons != 0 || input.has_excitation() {
        return Connection::identity(*input, Unconnected);
    }
    match step.kind {
        StepKind::LambdaStirap => {
            let atom = step.first.atom;
            let level = input.level(atom);
            let phase = step.relative_phase - std::f64::consts::PI;
            if level == step.second.lower {
                Connection { output: input.with_level(atom, step.first.lower), phase, kind: Transfer }
            } else if level == step.first.lower {
                Connection::identity(*input, Unconnected)
            } else {
                Connection::identity(*input, Spectator)
            }
        }
        StepKind::CavityStirap => {
            let a = step.assignment().expect("cavity step has an assignment");
            let from_atom1 = ket(a.l1, G1);
            let from_atom2 = ket(G1, a.l2);
            // the second pulse drives the atom that holds the population initially
            let (source, target) = match step.second.atom {
                Atom::Second => (from_atom2, from_atom1),
                Atom::First => (from_atom1, from_atom2),
            };
            if *input == source {
                Connection { output: target, phase: step.relative_phase, kind: Transfer }
            } else if *input == target {
                Connection::identity(*input, Unconnected)
            } else if H16_SEEDS.contains(input) {
                Connection::identity(*input, Return)
            } else {
                Connection::identity(*input, Spectator)
            }
        }
    }
}

/// Residual and support checks of one step.
#[derive(Clone, Debug, Serialize)]
pub struct StepDarkReport {
    pub step: usize,
    /// `max_t max_k |H(t) phi_k(t)| / |H(t)|`.
    pub max_residual_ratio: f64,
    pub max_excited_amplitude: f64,
    /// Kernel dimension of the 7-state block at the midpoint of the step (cavity steps).
    pub h7_kernel_dim: Option<usize>,
    /// Smallest projection of a 16-block dark state onto the numeric 16-block kernel.
    pub h16_min_projection: Option<f64>,
    pub geometric_max: f64,
    pub grid_too_coarse: bool,
}

impl StepDarkReport {
    pub fn passes(&self) -> bool {
        self.max_residual_ratio <= RESIDUAL_BOUND
            && self.max_excited_amplitude == 0.0
            && self.h7_kernel_dim.is_none_or(|d| d >= 3)
            && self.h16_min_projection.is_none_or(|p| p >= 1.0 - 1e-10)
            && self.geometric_max <= GEOMETRIC_BOUND
            && !self.grid_too_coarse
    }
}

/// Runs every dark-state check for every step of `schedule`.
pub fn verify_dark_states(
    space: &HilbertSpace,
    schedule: &ProtocolSchedule,
    cavity: &CavityParams,
    residual_samples: usize,
    family_samples: usize,
) -> Result<Vec<StepDarkReport>> {
    use crate::hamiltonian::block_audit;
    let mut reports = Vec::new();
    for step in &schedule.steps {
        let (t0, t1) = step.window;
        let mut max_ratio = 0.0_f64;
        let mut max_excited = 0.0_f64;
        let n = residual_samples.max(2);
        for j in 0..n {
            let t = t0 + (t1 - t0) * j as f64 / (n - 1) as f64;
            let h = interaction_hamiltonian(space, &active_couplings(schedule, t), cavity)?;
            let norm = h.spectral_norm();
            for d in step_dark_states(schedule, cavity, step, t)? {
                let r = h.apply(&d.to_vector(space)?).norm();
                let ratio = if norm > 0.0 { r / norm } else { r };
                max_ratio = max_ratio.max(ratio);
                max_excited = max_excited.max(d.excited_support());
            }
        }

        let (mut h7_dim, mut h16_proj) = (None, None);
        if step.kind == StepKind::CavityStirap {
            let mid = 0.5 * (step.first_center + step.second_center);
            let h = interaction_hamiltonian(space, &active_couplings(schedule, mid), cavity)?;
            let blocks = block_audit(space, &h)?;
            let h7 = crate::statespace::restrict_operator(space, &h, &blocks.h7)?;
            h7_dim = Some(numeric_kernel(&h7, KERNEL_TOL).dimension());
            let h16 = crate::statespace::restrict_operator(space, &h, &blocks.h16)?;
            let kernel = numeric_kernel(&h16, KERNEL_TOL);
            let mut worst = f64::INFINITY;
            for d in step_dark_states(schedule, cavity, step, mid)?.iter().filter(|d| d.label.starts_with("phi16")) {
                let v = crate::statespace::restrict_state(space, &d.to_vector(space)?, &blocks.h16)?;
                worst = worst.min(kernel.projection_norm(&v));
            }
            h16_proj = Some(worst);
        }

        let family = step_dark_family(space, schedule, cavity, step, family_samples)?;
        let g = geometric_couplings(&family);
        reports.push(StepDarkReport {
            step: step.number,
            max_residual_ratio: max_ratio,
            max_excited_amplitude: max_excited,
            h7_kernel_dim: h7_dim,
            h16_min_projection: h16_proj,
            geometric_max: g.max(),
            grid_too_coarse: g.too_coarse,
        });
    }
    Ok(reports)
}

/// Residual `|H phi|` of a dark state against an assembled Hamiltonian.
pub fn residual(space: &HilbertSpace, h: &Operator, d: &DarkState) -> Result<f64> {
    Ok(h.apply(&d.to_vector(space)?).norm())
}
