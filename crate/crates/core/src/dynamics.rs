//! Time propagation over a protocol schedule.
//!
//! Both engines use the classical fixed-step fourth-order Runge-Kutta scheme
//! with the Hamiltonian evaluated at `t`, `t + h/2` and `t + h`. The
//! Hamiltonian and collapse operators are applied in sparse form; states and
//! density matrices are dense.
//!
//! The Lindblad generator is
//! `drho/dt = -i[H, rho] + sum_k (L_k rho L_k^dag - {L_k^dag L_k, rho} / 2)`
//! with `L = sqrt(kappa) a` for cavity loss and optional spontaneous emission
//! `sqrt(b_s / tau) |s><e|` (and `|s><u|`) on each atom.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::darkstates::expected_connection;
use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianAssembler, SparseOperator};
use crate::pulses::{active_couplings, CavityParams, ProtocolSchedule};
use crate::statespace::{ket, Atom, AtomLevel, BasisState, CMatrix, CVector, DensityMatrix, HilbertSpace, StateVector};

const MINUS_I: C64 = C64 { re: 0.0, im: -1.0 };

/// Default step `h = T_p / 200`.
pub const DEFAULT_STEP: f64 = 1.0 / 200.0;
pub const NORM_TOLERANCE: f64 = 1e-8;
pub const TRACE_TOLERANCE: f64 = 1e-6;
pub const POSITIVITY_TOLERANCE: f64 = 1e-8;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindbladModel {
    /// Photon-number decay rate; the collapse operator is `sqrt(kappa) a`.
    pub kappa: f64,
    /// Lifetime of `e`; `None` disables its decay.
    pub tau_e: Option<f64>,
    /// Branching of `e` into `(0, a, 1)`.
    pub branching_e: [f64; 3],
    pub tau_u: Option<f64>,
    pub branching_u: [f64; 3],
}

impl Default for LindbladModel {
    fn default() -> Self {
        Self { kappa: 0.0, tau_e: None, branching_e: [1.0 / 3.0; 3], tau_u: None, branching_u: [1.0 / 3.0; 3] }
    }
}

impl LindbladModel {
    pub fn cavity_only(kappa: f64) -> Self {
        Self { kappa, ..Self::default() }
    }

    /// Cavity loss given as the decay rate of the field amplitude, so that
    /// `<a>` decays as `exp(-kappa t)` and `<a^dag a>` as `exp(-2 kappa t)`.
    pub fn from_field_decay(kappa_field: f64) -> Self {
        Self::cavity_only(2.0 * kappa_field)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) {
            return Err(Error::InvalidParameter { name: "kappa", reason: format!("must be >= 0 (got {})", self.kappa) });
        }
        for (name, tau) in [("tau_e", self.tau_e), ("tau_u", self.tau_u)] {
            if let Some(t) = tau {
                if !(t > 0.0) {
                    return Err(Error::InvalidParameter { name, reason: format!("lifetime must be > 0 (got {t})") });
                }
            }
        }
        for (name, b) in [("branching_e", self.branching_e), ("branching_u", self.branching_u)] {
            if b.iter().any(|x| !(*x >= 0.0)) || (b.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter { name, reason: format!("ratios must be >= 0 and sum to 1 (got {b:?})") });
            }
        }
        Ok(())
    }

    /// Collapse operators in sparse form.
    pub fn collapse_operators(&self, space: &HilbertSpace) -> Vec<SparseOperator> {
        let mut out = Vec::new();
        if self.kappa > 0.0 {
            let mut a = SparseOperator::new(space.dim());
            for (col, s) in space.states().iter().enumerate() {
                if s.photons > 0 {
                    let row = space.index_of(&BasisState { photons: s.photons - 1, ..*s }).expect("in range");
                    a.entries.push((row, col, C64::new((self.kappa * s.photons as f64).sqrt(), 0.0)));
                }
            }
            out.push(a);
        }
        for (upper, tau, branching) in [(AtomLevel::E, self.tau_e, self.branching_e), (AtomLevel::U, self.tau_u, self.branching_u)] {
            let Some(tau) = tau else { continue };
            for atom in Atom::BOTH {
                for (ground, b) in AtomLevel::GROUND.into_iter().zip(branching) {
                    if b == 0.0 {
                        continue;
                    }
                    let rate = (b / tau).sqrt();
                    let mut l = SparseOperator::new(space.dim());
                    for (col, s) in space.states().iter().enumerate() {
                        if s.level(atom) == upper {
                            let row = space.index_of(&s.with_level(atom, ground)).expect("same photons");
                            l.entries.push((row, col, C64::new(rate, 0.0)));
                        }
                    }
                    out.push(l);
                }
            }
        }
        out
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Nominal step; each segment uses the largest step not above it that tiles the segment.
    pub step: f64,
    pub norm_tolerance: f64,
    pub trace_tolerance: f64,
    pub positivity_tolerance: f64,
    /// Time-series row every this many steps.
    pub sample_every: usize,
    /// Positivity check every this many steps (Lindblad only).
    pub positivity_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            norm_tolerance: NORM_TOLERANCE,
            trace_tolerance: TRACE_TOLERANCE,
            positivity_tolerance: POSITIVITY_TOLERANCE,
            sample_every: 10,
            positivity_every: 200,
        }
    }
}

impl IntegratorConfig {
    pub fn with_step(step: f64) -> Self {
        Self { step, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidParameter { name: "h", reason: format!("step must be > 0 (got {})", self.step) });
        }
        Ok(())
    }
}

/// Pure or mixed state.
#[derive(Clone, Debug, PartialEq)]
pub enum QuantumState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl QuantumState {
    pub fn population(&self, space: &HilbertSpace, s: &BasisState) -> f64 {
        match self {
            QuantumState::Pure(psi) => psi.population(space, s),
            QuantumState::Mixed(rho) => rho.population(space, s),
        }
    }

    /// `|<target|psi>|^2` or `<target|rho|target>`.
    pub fn fidelity_to(&self, target: &StateVector) -> f64 {
        match self {
            QuantumState::Pure(psi) => target.inner(psi).norm_sqr(),
            QuantumState::Mixed(rho) => target.0.dotc(&(&rho.0 * &target.0)).re,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            QuantumState::Pure(psi) => psi.0.iter().map(|z| z.norm_sqr()).collect(),
            QuantumState::Mixed(rho) => (0..rho.dim()).map(|i| rho.0[(i, i)].re).collect(),
        }
    }

    pub fn as_pure(&self) -> Option<&StateVector> {
        match self {
            QuantumState::Pure(p) => Some(p),
            QuantumState::Mixed(_) => None,
        }
    }
}

/// Diagonal projector onto a set of basis states.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    pub label: String,
    pub states: Vec<BasisState>,
}

impl Projector {
    pub fn onto(s: BasisState) -> Self {
        Self { label: format!("{}{}_{}", s.atom1, s.atom2, s.photons), states: vec![s] }
    }
}

/// Expectation values of diagonal projectors.
pub fn populations(space: &HilbertSpace, state: &QuantumState, projectors: &[Projector]) -> Vec<f64> {
    let diag = state.diagonal();
    projectors
        .iter()
        .map(|p| p.states.iter().filter_map(|s| space.index_of(s)).map(|i| diag[i]).sum())
        .collect()
}

/// The nine zero-photon two-atom ground states.
pub fn ground_projectors() -> Vec<Projector> {
    let mut out = Vec::new();
    for a1 in AtomLevel::GROUND {
        for a2 in AtomLevel::GROUND {
            out.push(Projector::onto(ket(a1, a2)));
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TimeSeries {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub populations: Vec<Vec<f64>>,
    pub norm_or_trace: Vec<f64>,
    pub photons: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    /// Population of the expected state after the step.
    pub overlap: f64,
    pub max_photons: f64,
    pub max_excited: f64,
}

#[derive(Clone, Debug)]
pub struct ProtocolResult {
    pub final_state: QuantumState,
    pub steps: Vec<StepDiagnostics>,
    pub series: TimeSeries,
    /// Largest `|1 - |psi||` or `|1 - Tr rho|` seen.
    pub max_drift: f64,
    /// Smallest density-matrix eigenvalue seen at the positivity checkpoints.
    pub min_eigenvalue: Option<f64>,
    /// Time-max photon expectation during cavity steps.
    pub max_photons_cavity_steps: f64,
    /// Time-max population of states with an excited atom.
    pub max_excited: f64,
    pub steps_taken: usize,
}

impl ProtocolResult {
    pub fn population(&self, space: &HilbertSpace, s: &BasisState) -> f64 {
        self.final_state.population(space, s)
    }
}

struct Segment {
    t0: f64,
    n: usize,
    h: f64,
    step: Option<usize>,
}

fn segments(schedule: &ProtocolSchedule, h: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut push = |t0: f64, t1: f64, step| {
        let len = t1 - t0;
        if len <= 0.0 {
            return;
        }
        let n = ((len / h) - 1e-9).ceil().max(1.0) as usize;
        out.push(Segment { t0, n, h: len / n as f64, step });
    };
    let mut t = schedule.start;
    for st in &schedule.steps {
        push(t, st.window.0, None);
        push(st.window.0, st.window.1, Some(st.number));
        t = st.window.1;
    }
    push(t, schedule.end, None);
    out
}

/// Time-dependent sparse Hamiltonian of a schedule.
pub struct ScheduleHamiltonian<'a> {
    schedule: &'a ProtocolSchedule,
    assembler: HamiltonianAssembler,
}

impl<'a> ScheduleHamiltonian<'a> {
    pub fn new(space: &HilbertSpace, schedule: &'a ProtocolSchedule, cavity: &CavityParams) -> Self {
        Self { schedule, assembler: HamiltonianAssembler::new(space, cavity) }
    }

    pub fn at(&self, t: f64) -> SparseOperator {
        self.assembler.assemble(&active_couplings(self.schedule, t)).expect("schedule only drives laser lines")
    }
}

fn axpy_into(out: &mut CVector, y: &CVector, a: f64, k: &CVector) {
    for ((o, y), k) in out.iter_mut().zip(y.iter()).zip(k.iter()) {
        *o = y + k * a;
    }
}

fn rk4_pure_step(h_t: &SparseOperator, h_mid: &SparseOperator, h_end: &SparseOperator, psi: &mut CVector, dt: f64, work: &mut [CVector; 5]) {
    let [k1, k2, k3, k4, tmp] = work;
    let deriv = |h: &SparseOperator, x: &CVector, out: &mut CVector| {
        h.apply_into(x, out);
        *out *= MINUS_I;
    };
    deriv(h_t, psi, k1);
    axpy_into(tmp, psi, 0.5 * dt, k1);
    deriv(h_mid, tmp, k2);
    axpy_into(tmp, psi, 0.5 * dt, k2);
    deriv(h_mid, tmp, k3);
    axpy_into(tmp, psi, dt, k3);
    deriv(h_end, tmp, k4);
    for i in 0..psi.len() {
        psi[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
    }
}

/// Lindblad generator with collapse operators that have at most one entry per column.
pub struct Lindbladian {
    dim: usize,
    collapse: Vec<SparseOperator>,
    /// Diagonal of `sum_k L_k^dag L_k`.
    decay: Vec<f64>,
}

impl Lindbladian {
    pub fn new(space: &HilbertSpace, model: &LindbladModel) -> Result<Self> {
        model.validate()?;
        let dim = space.dim();
        let collapse = model.collapse_operators(space);
        let mut decay = vec![0.0; dim];
        for l in &collapse {
            let mut per_col = vec![0usize; dim];
            for &(_, c, v) in &l.entries {
                per_col[c] += 1;
                decay[c] += v.norm_sqr();
            }
            assert!(per_col.iter().all(|&n| n <= 1), "collapse operator must map each basis state to at most one state");
        }
        Ok(Self { dim, collapse, decay })
    }

    /// `out = L(rho)` for Hamiltonian `h`; `scratch` receives `h rho`.
    fn apply(&self, h: &SparseOperator, rho: &CMatrix, out: &mut CMatrix, scratch: &mut CMatrix) {
        let n = self.dim;
        h.mul_dense_into(rho, scratch);
        let r = rho.as_slice();
        let hr = scratch.as_slice();
        let o = out.as_mut_slice();
        for j in 0..n {
            for i in 0..n {
                // -i (H rho - rho H), with rho H = (H rho)^dag for Hermitian rho
                let comm = hr[j * n + i] - hr[i * n + j].conj();
                o[j * n + i] = MINUS_I * comm - r[j * n + i] * (0.5 * (self.decay[i] + self.decay[j]));
            }
        }
        for l in &self.collapse {
            for &(jr, jc, w) in &l.entries {
                let wc = w.conj();
                for &(ir, ic, v) in &l.entries {
                    o[jr * n + ir] += v * wc * r[jc * n + ic];
                }
            }
        }
    }
}

fn rk4_mixed_step(
    lind: &Lindbladian,
    hs: [&SparseOperator; 3],
    rho: &mut CMatrix,
    dt: f64,
    work: &mut [CMatrix; 6],
) {
    let [k1, k2, k3, k4, tmp, scratch] = work;
    lind.apply(hs[0], rho, k1, scratch);
    tmp.zip_zip_apply(rho, k1, |t, r, k| *t = r + k * (0.5 * dt));
    lind.apply(hs[1], tmp, k2, scratch);
    tmp.zip_zip_apply(rho, k2, |t, r, k| *t = r + k * (0.5 * dt));
    lind.apply(hs[1], tmp, k3, scratch);
    tmp.zip_zip_apply(rho, k3, |t, r, k| *t = r + k * dt);
    lind.apply(hs[2], tmp, k4, scratch);
    let c = dt / 6.0;
    let (r, a, b, cc, d) = (rho.as_mut_slice(), k1.as_slice(), k2.as_slice(), k3.as_slice(), k4.as_slice());
    for i in 0..r.len() {
        r[i] += (a[i] + (b[i] + cc[i]) * 2.0 + d[i]) * c;
    }
}

/// Bookkeeping shared by both engines.
struct Recorder<'a> {
    space: &'a HilbertSpace,
    projector_indices: Vec<Vec<usize>>,
    photon_diag: Vec<f64>,
    excited_mask: Vec<bool>,
    series: TimeSeries,
    steps: Vec<StepDiagnostics>,
    max_drift: f64,
    max_photons_cavity: f64,
    max_excited: f64,
    expected: Vec<(BasisState, C64)>,
}

impl<'a> Recorder<'a> {
    fn new(space: &'a HilbertSpace, projectors: Vec<Projector>, initial: &StateVector) -> Self {
        let expected = space
            .states()
            .iter()
            .zip(initial.0.iter())
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(s, c)| (*s, *c))
            .collect();
        Self {
            space,
            series: TimeSeries { labels: projectors.iter().map(|p| p.label.clone()).collect(), ..Default::default() },
            projector_indices: projectors.iter().map(|p| p.states.iter().filter_map(|s| space.index_of(s)).collect()).collect(),
            photon_diag: space.states().iter().map(|s| s.photons as f64).collect(),
            excited_mask: space.states().iter().map(|s| s.has_excitation()).collect(),
            steps: Vec::new(),
            max_drift: 0.0,
            max_photons_cavity: 0.0,
            max_excited: 0.0,
            expected,
        }
    }

    fn observe(&mut self, t: f64, diag: &[f64], norm_or_trace: f64, step: Option<(usize, bool)>, sample: bool) {
        let photons: f64 = diag.iter().zip(&self.photon_diag).map(|(p, n)| p * n).sum();
        let excited: f64 = diag.iter().zip(&self.excited_mask).filter(|(_, m)| **m).map(|(p, _)| p).sum();
        self.max_excited = self.max_excited.max(excited);
        if let Some((n, cavity_step)) = step {
            if let Some(d) = self.steps.iter_mut().find(|d| d.step == n) {
                d.max_photons = d.max_photons.max(photons);
                d.max_excited = d.max_excited.max(excited);
            }
            if cavity_step {
                self.max_photons_cavity = self.max_photons_cavity.max(photons);
            }
        }
        if sample {
            self.series.times.push(t);
            self.series.populations.push(self.projector_indices.iter().map(|ix| ix.iter().map(|&i| diag[i]).sum()).collect());
            self.series.norm_or_trace.push(norm_or_trace);
            self.series.photons.push(photons);
        }
    }

    fn begin_step(&mut self, n: usize) {
        self.steps.push(StepDiagnostics { step: n, overlap: 0.0, max_photons: 0.0, max_excited: 0.0 });
    }

    fn end_step(&mut self, schedule: &ProtocolSchedule, n: usize, state: &QuantumState) -> Result<()> {
        let spec = schedule.step(n).expect("segment refers to a step");
        let mut next: Vec<(BasisState, C64)> = Vec::new();
        for (s, c) in &self.expected {
            let conn = expected_connection(spec, s);
            let amp = c * C64::from_polar(1.0, conn.phase);
            match next.iter_mut().find(|(b, _)| *b == conn.output) {
                Some((_, a)) => *a += amp,
                None => next.push((conn.output, amp)),
            }
        }
        self.expected = next;
        let target = StateVector::superposition(self.space, &self.expected)?;
        let overlap = state.fidelity_to(&target);
        if let Some(d) = self.steps.iter_mut().find(|d| d.step == n) {
            d.overlap = overlap;
        }
        Ok(())
    }
}

fn check_initial(space: &HilbertSpace, initial: &StateVector, config: &IntegratorConfig) -> Result<()> {
    config.validate()?;
    if initial.dim() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: initial.dim() });
    }
    if !initial.is_normalized(1e-10) {
        return Err(Error::InvalidParameter { name: "initial", reason: format!("state norm {} is not 1", initial.norm()) });
    }
    Ok(())
}

fn is_cavity_step(schedule: &ProtocolSchedule, n: usize) -> bool {
    schedule.step(n).is_some_and(|s| s.kind == crate::pulses::StepKind::CavityStirap)
}

/// Unitary propagation over the whole schedule.
pub fn evolve_schrodinger(
    space: &HilbertSpace,
    schedule: &ProtocolSchedule,
    cavity: &CavityParams,
    initial: &StateVector,
    config: &IntegratorConfig,
) -> Result<ProtocolResult> {
    evolve_schrodinger_tracking(space, schedule, cavity, initial, config, ground_projectors())
}

pub fn evolve_schrodinger_tracking(
    space: &HilbertSpace,
    schedule: &ProtocolSchedule,
    cavity: &CavityParams,
    initial: &StateVector,
    config: &IntegratorConfig,
    projectors: Vec<Projector>,
) -> Result<ProtocolResult> {
    check_initial(space, initial, config)?;
    let ham = ScheduleHamiltonian::new(space, schedule, cavity);
    let mut rec = Recorder::new(space, projectors, initial);
    let mut psi = initial.0.clone();
    let mut work: [CVector; 5] = std::array::from_fn(|_| CVector::zeros(space.dim()));
    let mut taken = 0usize;

    let mut diag: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
    rec.observe(schedule.start, &diag, psi.norm(), None, true);
    for seg in segments(schedule, config.step) {
        let tag = seg.step.map(|n| (n, is_cavity_step(schedule, n)));
        if let Some(n) = seg.step {
            rec.begin_step(n);
        }
        let mut h_t = ham.at(seg.t0);
        for k in 0..seg.n {
            let t = seg.t0 + k as f64 * seg.h;
            let h_mid = ham.at(t + 0.5 * seg.h);
            let h_end = ham.at(t + seg.h);
            rk4_pure_step(&h_t, &h_mid, &h_end, &mut psi, seg.h, &mut work);
            h_t = h_end;
            taken += 1;

            let norm = psi.norm();
            let drift = (1.0 - norm).abs();
            rec.max_drift = rec.max_drift.max(drift);
            if !(drift <= config.norm_tolerance) {
                return Err(Error::NormDrift { time: t + seg.h, drift, tolerance: config.norm_tolerance, step: seg.h });
            }
            let sample = taken.is_multiple_of(config.sample_every.max(1)) || k + 1 == seg.n;
            diag.iter_mut().zip(psi.iter()).for_each(|(p, z)| *p = z.norm_sqr());
            rec.observe(t + seg.h, &diag, norm, tag, sample);
        }
        if let Some(n) = seg.step {
            rec.end_step(schedule, n, &QuantumState::Pure(StateVector(psi.clone())))?;
        }
    }
    Ok(ProtocolResult {
        final_state: QuantumState::Pure(StateVector(psi)),
        steps: rec.steps,
        series: rec.series,
        max_drift: rec.max_drift,
        min_eigenvalue: None,
        max_photons_cavity_steps: rec.max_photons_cavity,
        max_excited: rec.max_excited,
        steps_taken: taken,
    })
}

/// Master-equation propagation over the whole schedule.
pub fn evolve_lindblad(
    space: &HilbertSpace,
    schedule: &ProtocolSchedule,
    cavity: &CavityParams,
    model: &LindbladModel,
    initial: &StateVector,
    config: &IntegratorConfig,
) -> Result<ProtocolResult> {
    check_initial(space, initial, config)?;
    let lind = Lindbladian::new(space, model)?;
    let ham = ScheduleHamiltonian::new(space, schedule, cavity);
    let mut rec = Recorder::new(space, ground_projectors(), initial);
    let mut rho = DensityMatrix::from_pure(initial).0;
    let d = space.dim();
    let mut work: [CMatrix; 6] = std::array::from_fn(|_| CMatrix::zeros(d, d));
    let mut taken = 0usize;
    let mut min_eig = f64::INFINITY;

    let mut diag: Vec<f64> = (0..d).map(|i| rho[(i, i)].re).collect();
    rec.observe(schedule.start, &diag, 1.0, None, true);
    for seg in segments(schedule, config.step) {
        let tag = seg.step.map(|n| (n, is_cavity_step(schedule, n)));
        if let Some(n) = seg.step {
            rec.begin_step(n);
        }
        let mut h_t = ham.at(seg.t0);
        for k in 0..seg.n {
            let t = seg.t0 + k as f64 * seg.h;
            let h_mid = ham.at(t + 0.5 * seg.h);
            let h_end = ham.at(t + seg.h);
            rk4_mixed_step(&lind, [&h_t, &h_mid, &h_end], &mut rho, seg.h, &mut work);
            h_t = h_end;
            taken += 1;

            let trace = rho.trace();
            let drift = (C64::new(1.0, 0.0) - trace).norm();
            rec.max_drift = rec.max_drift.max(drift);
            if !(drift <= config.trace_tolerance) {
                return Err(Error::TraceDrift { time: t + seg.h, drift, tolerance: config.trace_tolerance, step: seg.h });
            }
            let last = k + 1 == seg.n;
            if taken.is_multiple_of(config.positivity_every.max(1)) || last {
                let e = DensityMatrix(rho.clone()).min_eigenvalue();
                min_eig = min_eig.min(e);
                if !(e >= -config.positivity_tolerance) {
                    return Err(Error::Positivity { time: t + seg.h, min_eigenvalue: e });
                }
            }
            let sample = taken.is_multiple_of(config.sample_every.max(1)) || last;
            diag.iter_mut().enumerate().for_each(|(i, p)| *p = rho[(i, i)].re);
            rec.observe(t + seg.h, &diag, trace.re, tag, sample);
        }
        if let Some(n) = seg.step {
            rec.end_step(schedule, n, &QuantumState::Mixed(DensityMatrix(rho.clone())))?;
        }
    }
    Ok(ProtocolResult {
        final_state: QuantumState::Mixed(DensityMatrix(rho)),
        steps: rec.steps,
        series: rec.series,
        max_drift: rec.max_drift,
        min_eigenvalue: Some(min_eig),
        max_photons_cavity_steps: rec.max_photons_cavity,
        max_excited: rec.max_excited,
        steps_taken: taken,
    })
}

/// Dispatches to the Lindblad engine when a model is given, else the unitary one.
pub fn run_protocol(
    space: &HilbertSpace,
    schedule: &ProtocolSchedule,
    cavity: &CavityParams,
    model: Option<&LindbladModel>,
    initial: &StateVector,
    config: &IntegratorConfig,
) -> Result<ProtocolResult> {
    match model {
        Some(m) => evolve_lindblad(space, schedule, cavity, m, initial, config),
        None => evolve_schrodinger(space, schedule, cavity, initial, config),
    }
}

/// RK4 propagation of a pure state under an arbitrary sparse `H(t)` on `[t0, t1]`.
pub fn propagate_pure(h_of_t: impl Fn(f64) -> SparseOperator, psi0: &CVector, t0: f64, t1: f64, steps: usize) -> CVector {
    let dt = (t1 - t0) / steps as f64;
    let mut psi = psi0.clone();
    let mut work: [CVector; 5] = std::array::from_fn(|_| CVector::zeros(psi0.len()));
    let mut h_t = h_of_t(t0);
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let h_mid = h_of_t(t + 0.5 * dt);
        let h_end = h_of_t(t + dt);
        rk4_pure_step(&h_t, &h_mid, &h_end, &mut psi, dt, &mut work);
        h_t = h_end;
    }
    psi
}

/// RK4 propagation of a density matrix under a time-independent sparse `H`.
pub fn propagate_mixed(space: &HilbertSpace, h: &SparseOperator, model: &LindbladModel, rho0: &DensityMatrix, duration: f64, steps: usize) -> Result<DensityMatrix> {
    let lind = Lindbladian::new(space, model)?;
    let d = space.dim();
    let mut rho = rho0.0.clone();
    let mut work: [CMatrix; 6] = std::array::from_fn(|_| CMatrix::zeros(d, d));
    let dt = duration / steps as f64;
    for _ in 0..steps {
        rk4_mixed_step(&lind, [h, h, h], &mut rho, dt, &mut work);
    }
    Ok(DensityMatrix(rho))
}
