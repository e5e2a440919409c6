//! Gaussian laser pulses and the six-step CNOT schedule.
//!
//! Every step drives two pulses of equal peak amplitude separated by a fixed
//! delay, the first-listed pulse leading (counterintuitive order for the
//! population that the step moves). Step windows are
//! `[c - 4 T_p, c + delay + 4 T_p]` around the first center `c`, separated by
//! a dead gap of `2 T_p`. A step phase is carried by the second pulse.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statespace::{Atom, AtomLevel};

pub const DEFAULT_DELAY: f64 = 1.2;
pub const WINDOW_MARGIN: f64 = 4.0;
pub const STEP_GAP: f64 = 2.0;
/// Couplings whose envelope is below this fraction of the peak are dropped.
pub const COUPLING_FLOOR: f64 = 1e-8;

/// `amplitude * exp(-((t - center) / width)^2) * exp(i phase)`, optionally
/// held at its peak for `plateau` time units after `center`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub amplitude: f64,
    pub width: f64,
    pub center: f64,
    pub phase: f64,
    #[serde(default)]
    pub plateau: f64,
}

impl PulseShape {
    pub fn gaussian(amplitude: f64, width: f64, center: f64, phase: f64) -> Self {
        Self { amplitude, width, center, phase, plateau: 0.0 }
    }

    pub fn envelope(&self, t: f64) -> f64 {
        let x = if t < self.center {
            t - self.center
        } else if t > self.center + self.plateau {
            t - self.center - self.plateau
        } else {
            0.0
        };
        let x = x / self.width;
        self.amplitude * (-x * x).exp()
    }

    pub fn value(&self, t: f64) -> C64 {
        C64::from_polar(self.envelope(t), self.phase)
    }

    /// Interval outside which the envelope is below `floor * amplitude`.
    pub fn support(&self, floor: f64) -> (f64, f64) {
        let reach = self.width * (-floor.ln()).sqrt();
        (self.center - reach, self.center + self.plateau + reach)
    }
}

pub fn gaussian_value(p: &PulseShape, t: f64) -> C64 {
    p.value(t)
}

/// A laser field driving `|upper><lower|` on one atom.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Drive {
    pub atom: Atom,
    pub upper: AtomLevel,
    pub lower: AtomLevel,
}

impl Drive {
    /// Only four laser transitions exist in the level scheme: `e<-0`, `e<-a`,
    /// `u<-a`, `u<-1`. The `e<-1` line belongs to the cavity.
    pub fn new(atom: Atom, upper: AtomLevel, lower: AtomLevel) -> Result<Self> {
        use AtomLevel::*;
        if !upper.is_excited() || !lower.is_ground() {
            return Err(Error::InvalidTransition { upper, lower });
        }
        match (upper, lower) {
            (E, G0) | (E, Ga) | (U, Ga) | (U, G1) => Ok(Self { atom, upper, lower }),
            _ => Err(Error::UndrivenTransition { upper, lower }),
        }
    }

    pub fn label(&self) -> String {
        format!("{}<-{}", self.upper, self.lower)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Three-level STIRAP through `u` on a single atom.
    LambdaStirap,
    /// One laser per atom, bridged by the cavity.
    CavityStirap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSpec {
    /// 1-based position in the protocol.
    pub number: usize,
    pub kind: StepKind,
    pub first: Drive,
    pub second: Drive,
    /// The extra phase `phi_(n)` requested for this step.
    pub step_phase: f64,
    /// Phase of the second pulse relative to the first.
    pub relative_phase: f64,
    pub first_center: f64,
    pub second_center: f64,
    pub window: (f64, f64),
}

/// Driven ground level `L` and undriven level `N` of each atom in a cavity step.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct LAssignment {
    pub l1: AtomLevel,
    pub l2: AtomLevel,
}

impl LAssignment {
    pub fn new(l1: AtomLevel, l2: AtomLevel) -> Self {
        Self { l1, l2 }
    }

    fn partner(l: AtomLevel) -> AtomLevel {
        match l {
            AtomLevel::G0 => AtomLevel::Ga,
            AtomLevel::Ga => AtomLevel::G0,
            other => other,
        }
    }

    pub fn n1(&self) -> AtomLevel {
        Self::partner(self.l1)
    }

    pub fn n2(&self) -> AtomLevel {
        Self::partner(self.l2)
    }

    pub fn l(&self, atom: Atom) -> AtomLevel {
        match atom {
            Atom::First => self.l1,
            Atom::Second => self.l2,
        }
    }

    pub fn n(&self, atom: Atom) -> AtomLevel {
        match atom {
            Atom::First => self.n1(),
            Atom::Second => self.n2(),
        }
    }
}

impl StepSpec {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.window.0 && t <= self.window.1
    }

    /// L/N assignment of a cavity step; `None` for lambda steps.
    pub fn assignment(&self) -> Option<LAssignment> {
        if self.kind != StepKind::CavityStirap {
            return None;
        }
        let l = |atom| if self.first.atom == atom { self.first.lower } else { self.second.lower };
        Some(LAssignment::new(l(Atom::First), l(Atom::Second)))
    }

    pub fn drive_for(&self, atom: Atom) -> Option<Drive> {
        [self.first, self.second].into_iter().find(|d| d.atom == atom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledPulse {
    pub drive: Drive,
    pub shape: PulseShape,
    /// Step numbers this pulse serves (two for a merged pulse).
    pub steps: Vec<usize>,
}

/// Time-independent cavity couplings `g1`, `g2`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub g1: f64,
    pub g2: f64,
}

impl CavityParams {
    pub fn new(g1: f64, g2: f64) -> Result<Self> {
        if !(g1 >= 0.0 && g2 >= 0.0) {
            return Err(Error::InvalidParameter { name: "g", reason: format!("cavity couplings must be >= 0 (got {g1}, {g2})") });
        }
        Ok(Self { g1, g2 })
    }

    pub fn symmetric(g: f64) -> Result<Self> {
        Self::new(g, g)
    }

    pub fn get(&self, atom: Atom) -> f64 {
        match atom {
            Atom::First => self.g1,
            Atom::Second => self.g2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSchedule {
    pub steps: Vec<StepSpec>,
    pub pulses: Vec<ScheduledPulse>,
    pub omega_max: f64,
    pub width: f64,
    pub delay: f64,
    pub gap: f64,
    pub start: f64,
    pub end: f64,
    pub merged: bool,
}

/// One entry of [`active_couplings`].
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Coupling {
    pub atom: Atom,
    pub upper: AtomLevel,
    pub lower: AtomLevel,
    pub amplitude: C64,
}

impl ProtocolSchedule {
    pub fn pulse_count(&self) -> usize {
        self.pulses.len()
    }

    pub fn step(&self, number: usize) -> Option<&StepSpec> {
        self.steps.iter().find(|s| s.number == number)
    }

    pub fn step_at(&self, t: f64) -> Option<&StepSpec> {
        self.steps.iter().find(|s| s.contains(t))
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Total complex amplitude on `drive` at `t`, ignoring the coupling floor.
    pub fn drive_amplitude(&self, drive: &Drive, t: f64) -> C64 {
        self.pulses
            .iter()
            .filter(|p| p.drive == *drive)
            .map(|p| p.shape.value(t))
            .sum()
    }

    /// Serializable pulse list for plotting.
    pub fn export(&self) -> ScheduleExport {
        ScheduleExport {
            merged: self.merged,
            start: self.start,
            end: self.end,
            pulses: self
                .pulses
                .iter()
                .map(|p| PulseRecord {
                    atom: p.drive.atom.number(),
                    transition: p.drive.label(),
                    omega_max: p.shape.amplitude,
                    t_p: p.shape.width,
                    t0: p.shape.center,
                    phi: p.shape.phase,
                    plateau: p.shape.plateau,
                    steps: p.steps.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub atom: usize,
    pub transition: String,
    pub omega_max: f64,
    pub t_p: f64,
    pub t0: f64,
    pub phi: f64,
    pub plateau: f64,
    pub steps: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleExport {
    pub merged: bool,
    pub start: f64,
    pub end: f64,
    pub pulses: Vec<PulseRecord>,
}

fn drive(atom: Atom, upper: AtomLevel, lower: AtomLevel) -> Drive {
    Drive::new(atom, upper, lower).expect("protocol uses laser transitions only")
}

/// The six steps as (kind, first drive, second drive, base relative phase).
fn cnot_steps() -> [(StepKind, Drive, Drive, f64); 6] {
    use AtomLevel::*;
    use Atom::*;
    use StepKind::*;
    [
        // |1> -> |a> on atom 2; the relative phase pi avoids a sign on |a>
        (LambdaStirap, drive(Second, U, Ga), drive(Second, U, G1), PI),
        (CavityStirap, drive(First, E, Ga), drive(Second, E, G0), 0.0),
        (CavityStirap, drive(First, E, G0), drive(Second, E, Ga), 0.0),
        (CavityStirap, drive(Second, E, Ga), drive(First, E, Ga), 0.0),
        (CavityStirap, drive(Second, E, G0), drive(First, E, G0), 0.0),
        // |a> -> |1> on atom 2
        (LambdaStirap, drive(Second, U, G1), drive(Second, U, Ga), PI),
    ]
}

pub fn build_cnot_protocol(omega_max: f64, width: f64, delay: f64, step_phases: [f64; 6]) -> Result<ProtocolSchedule> {
    if !(omega_max > 0.0) {
        return Err(Error::InvalidParameter { name: "omega_max", reason: format!("must be > 0 (got {omega_max})") });
    }
    if !(width > 0.0) {
        return Err(Error::InvalidParameter { name: "t_p", reason: format!("must be > 0 (got {width})") });
    }
    if !(delay > 0.0) {
        return Err(Error::InvalidParameter { name: "delay", reason: format!("must be > 0 (got {delay})") });
    }

    let margin = WINDOW_MARGIN * width;
    let gap = STEP_GAP * width;
    let mut steps = Vec::with_capacity(6);
    let mut pulses = Vec::with_capacity(12);
    let mut t = 0.0;
    for (k, ((kind, first, second, base), phase)) in cnot_steps().into_iter().zip(step_phases).enumerate() {
        let number = k + 1;
        let first_center = t + margin;
        let second_center = first_center + delay;
        let window = (t, second_center + margin);
        let relative_phase = base + phase;
        pulses.push(ScheduledPulse {
            drive: first,
            shape: PulseShape::gaussian(omega_max, width, first_center, 0.0),
            steps: vec![number],
        });
        pulses.push(ScheduledPulse {
            drive: second,
            shape: PulseShape::gaussian(omega_max, width, second_center, relative_phase),
            steps: vec![number],
        });
        steps.push(StepSpec { number, kind, first, second, step_phase: phase, relative_phase, first_center, second_center, window });
        t = window.1 + gap;
    }
    let end = steps.last().map_or(0.0, |s| s.window.1);
    Ok(ProtocolSchedule { steps, pulses, omega_max, width, delay, gap, start: 0.0, end, merged: false })
}

fn same_phase(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d) < 1e-12
}

/// Replaces the trailing pulse of step 3 and the leading pulse of step 4
/// (both on `e<-a` of atom 2) by one flat-top pulse spanning both steps.
///
/// The merged envelope rises on the Gaussian edge of the step-3 pulse, stays
/// at the peak between the two original centers and falls on the Gaussian
/// edge of the step-4 pulse. Merging an already merged schedule is a no-op.
pub fn merge_adjacent_pulses(s: &ProtocolSchedule) -> Result<ProtocolSchedule> {
    let find = |step: usize, center: f64| {
        s.pulses
            .iter()
            .position(|p| p.steps == [step] && p.shape.center == center && p.shape.plateau == 0.0)
    };
    let (Some(step3), Some(step4)) = (s.step(3), s.step(4)) else {
        return Ok(s.clone());
    };
    if step3.second != step4.first {
        return Err(Error::InvalidParameter {
            name: "merge",
            reason: format!("step 3 ends with {} on atom {} but step 4 starts with {} on atom {}", step3.second.label(), step3.second.atom, step4.first.label(), step4.first.atom),
        });
    }
    let (Some(i3), Some(i4)) = (find(3, step3.second_center), find(4, step4.first_center)) else {
        return Ok(s.clone());
    };
    let (a, b) = (&s.pulses[i3], &s.pulses[i4]);
    if !same_phase(a.shape.phase, b.shape.phase) {
        return Err(Error::IncompatibleMergePhases { first: a.shape.phase, second: b.shape.phase });
    }
    let merged = ScheduledPulse {
        drive: a.drive,
        shape: PulseShape { plateau: b.shape.center - a.shape.center, ..a.shape },
        steps: vec![3, 4],
    };
    let mut pulses = s.pulses.clone();
    pulses[i3] = merged;
    pulses.remove(i4);
    Ok(ProtocolSchedule { pulses, merged: true, ..s.clone() })
}

/// Laser couplings above the floor at time `t`, amplitudes summed per drive.
pub fn active_couplings(s: &ProtocolSchedule, t: f64) -> Vec<Coupling> {
    active_couplings_with_floor(s, t, COUPLING_FLOOR)
}

pub fn active_couplings_with_floor(s: &ProtocolSchedule, t: f64, floor: f64) -> Vec<Coupling> {
    let cutoff = floor * s.omega_max;
    let mut out: Vec<Coupling> = Vec::new();
    for p in &s.pulses {
        if p.shape.envelope(t) <= cutoff {
            continue;
        }
        let amp = p.shape.value(t);
        let d = p.drive;
        match out.iter_mut().find(|c| c.atom == d.atom && c.upper == d.upper && c.lower == d.lower) {
            Some(c) => c.amplitude += amp,
            None => out.push(Coupling { atom: d.atom, upper: d.upper, lower: d.lower, amplitude: amp }),
        }
    }
    out
}
