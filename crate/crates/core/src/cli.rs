//! Command-line front end: configuration, dispatch and output files.
//!
//! Configuration files are flat TOML key-value lists in units of `T_p`.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 verification failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::darkstates::{verify_dark_states, StepDarkReport};
use crate::dynamics::{run_protocol, IntegratorConfig, LindbladModel, ProtocolResult, StepDiagnostics, TimeSeries};
use crate::error::Error;
use crate::gateanalysis::{
    gate_fidelity, gate_from_results, run_basis_inputs, target_composition, truth_table, ExtractedGate, GateMatrix, TruthTable,
};
use crate::hamiltonian::HamiltonianAssembler;
use crate::pulses::{active_couplings, build_cnot_protocol, merge_adjacent_pulses, CavityParams, ProtocolSchedule};
use crate::statespace::{build_space, ket, AtomLevel, HilbertSpace, StateVector, COMPUTATIONAL};

pub const TIMESERIES_SCHEMA: &str = "# stirap-cnot timeseries v1";
pub const SWEEP_SCHEMA: &str = "# stirap-cnot sweep v1";

/// Step used by the Lindblad engine when `h_tp` is not set.
pub const DEFAULT_LINDBLAD_STEP: f64 = 1.0 / 400.0;
/// Gate fidelity required by `compose-phases`.
pub const COMPOSITION_THRESHOLD: f64 = 0.99;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("numerical failure: {0}")]
    Numerical(#[from] Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Verification(_) => 4,
        }
    }

    fn config(key: &str, line: Option<usize>, msg: impl std::fmt::Display) -> Self {
        match line {
            Some(l) => CliError::Config(format!("`{key}` (line {l}): {msg}")),
            None => CliError::Config(format!("`{key}`: {msg}")),
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum InputSelector {
    #[serde(rename = "00")]
    #[value(name = "00")]
    S00,
    #[serde(rename = "01")]
    #[value(name = "01")]
    S01,
    #[serde(rename = "10")]
    #[value(name = "10")]
    S10,
    #[serde(rename = "11")]
    #[value(name = "11")]
    S11,
    #[serde(rename = "bell")]
    #[value(name = "bell")]
    Bell,
    #[default]
    #[serde(rename = "all")]
    #[value(name = "all")]
    All,
}

/// A named input state together with its computational amplitudes.
#[derive(Clone, Debug)]
pub struct NamedInput {
    pub label: &'static str,
    pub amplitudes: [C64; 4],
}

impl InputSelector {
    pub fn inputs(self) -> Vec<NamedInput> {
        let basis = |k: usize, label| {
            let mut a = [C64::new(0.0, 0.0); 4];
            a[k] = C64::new(1.0, 0.0);
            NamedInput { label, amplitudes: a }
        };
        match self {
            InputSelector::S00 => vec![basis(0, "00")],
            InputSelector::S01 => vec![basis(1, "01")],
            InputSelector::S10 => vec![basis(2, "10")],
            InputSelector::S11 => vec![basis(3, "11")],
            InputSelector::Bell => {
                let r = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                let zero = C64::new(0.0, 0.0);
                vec![NamedInput { label: "bell", amplitudes: [r, zero, zero, r] }]
            }
            InputSelector::All => vec![basis(0, "00"), basis(1, "01"), basis(2, "10"), basis(3, "11")],
        }
    }
}

impl NamedInput {
    pub fn state(&self, space: &HilbertSpace) -> crate::error::Result<StateVector> {
        let terms: Vec<_> = COMPUTATIONAL.iter().copied().zip(self.amplitudes).filter(|(_, c)| c.norm() > 0.0).collect();
        StateVector::superposition(space, &terms)
    }

    /// Image of the input under `gate`, embedded with zero photons.
    pub fn image(&self, space: &HilbertSpace, gate: &GateMatrix) -> crate::error::Result<StateVector> {
        let v = nalgebra::Vector4::from(self.amplitudes);
        let out = gate.0 * v;
        let terms: Vec<_> = COMPUTATIONAL.iter().copied().zip(out.iter().copied()).collect();
        StateVector::superposition(space, &terms)
    }
}

/// How `kappa_tp` enters the collapse operator.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaConvention {
    /// `sqrt(kappa) a`: photon number decays as `exp(-kappa t)`.
    #[default]
    Photon,
    /// `sqrt(2 kappa) a`: field amplitude decays as `exp(-kappa t)`.
    Field,
}

/// Validated run parameters, all in units of `T_p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub omega_max_tp: f64,
    pub g_tp: f64,
    pub delay_tp: f64,
    pub kappa_tp: f64,
    pub kappa_convention: KappaConvention,
    /// Lifetime of `e`; absent disables spontaneous emission.
    pub tau_tp: Option<f64>,
    pub n_max: usize,
    /// Integrator step; defaults depend on the engine.
    pub h_tp: Option<f64>,
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub phi4: f64,
    pub phi5: f64,
    pub phi6: f64,
    pub input: InputSelector,
    pub merged: bool,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    /// Pulse width in ns, only used to label reports.
    pub tp_ns: Option<f64>,
    /// Time-series row every this many integrator steps.
    pub sample_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            omega_max_tp: 10.0,
            g_tp: 25.0,
            delay_tp: crate::pulses::DEFAULT_DELAY,
            kappa_tp: 0.0,
            kappa_convention: KappaConvention::Photon,
            tau_tp: None,
            n_max: crate::statespace::DEFAULT_N_MAX,
            h_tp: None,
            phi1: 0.0,
            phi2: 0.0,
            phi3: 0.0,
            phi4: 0.0,
            phi5: 0.0,
            phi6: 0.0,
            input: InputSelector::All,
            merged: false,
            out_dir: None,
            tp_ns: None,
            sample_every: 10,
        }
    }
}

/// Numeric keys accepted by `sweep`.
pub const NUMERIC_KEYS: [&str; 13] = [
    "omega_max_tp", "g_tp", "delay_tp", "kappa_tp", "tau_tp", "n_max", "h_tp", "phi1", "phi2", "phi3", "phi4", "phi5", "phi6",
];

fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

/// Parses and validates a configuration file body.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
    cfg.validate_with(|key| key_line(text, key))?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.validate_with(|_| None)
    }

    fn validate_with(&self, line: impl Fn(&str) -> Option<usize>) -> Result<(), CliError> {
        let err = |key: &str, msg: String| Err(CliError::config(key, line(key), msg));
        for (key, v) in [("omega_max_tp", self.omega_max_tp), ("g_tp", self.g_tp), ("kappa_tp", self.kappa_tp)] {
            if !(v >= 0.0) || !v.is_finite() {
                return err(key, format!("must be a finite rate >= 0 (got {v})"));
            }
        }
        if !(self.delay_tp > 0.0) || !self.delay_tp.is_finite() {
            return err("delay_tp", format!("must be > 0 (got {})", self.delay_tp));
        }
        if let Some(t) = self.tau_tp {
            if !(t > 0.0) {
                return err("tau_tp", format!("must be > 0 (got {t})"));
            }
        }
        if let Some(h) = self.h_tp {
            if !(h > 0.0) || !h.is_finite() {
                return err("h_tp", format!("must be > 0 (got {h})"));
            }
        }
        if self.n_max < crate::statespace::MIN_N_MAX {
            return err("n_max", format!("must be >= {} (got {})", crate::statespace::MIN_N_MAX, self.n_max));
        }
        if self.sample_every == 0 {
            return err("sample_every", "must be >= 1".into());
        }
        for (i, p) in self.phases().iter().enumerate() {
            if !p.is_finite() {
                return err(["phi1", "phi2", "phi3", "phi4", "phi5", "phi6"][i], format!("must be finite (got {p})"));
            }
        }
        if let Some(t) = self.tp_ns {
            if !(t > 0.0) {
                return err("tp_ns", format!("must be > 0 (got {t})"));
            }
        }
        Ok(())
    }

    pub fn phases(&self) -> [f64; 6] {
        [self.phi1, self.phi2, self.phi3, self.phi4, self.phi5, self.phi6]
    }

    pub fn is_dissipative(&self) -> bool {
        self.kappa_tp > 0.0 || self.tau_tp.is_some()
    }

    pub fn lindblad_model(&self) -> Option<LindbladModel> {
        let kappa = match self.kappa_convention {
            KappaConvention::Photon => self.kappa_tp,
            KappaConvention::Field => 2.0 * self.kappa_tp,
        };
        self.is_dissipative().then(|| LindbladModel { kappa, tau_e: self.tau_tp, ..LindbladModel::default() })
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let default = if self.is_dissipative() { DEFAULT_LINDBLAD_STEP } else { crate::dynamics::DEFAULT_STEP };
        IntegratorConfig { sample_every: self.sample_every, ..IntegratorConfig::with_step(self.h_tp.unwrap_or(default)) }
    }

    pub fn space(&self) -> Result<HilbertSpace, CliError> {
        build_space(self.n_max).map_err(|e| CliError::config("n_max", None, e))
    }

    pub fn cavity(&self) -> Result<CavityParams, CliError> {
        CavityParams::symmetric(self.g_tp).map_err(|e| CliError::config("g_tp", None, e))
    }

    pub fn schedule(&self) -> Result<ProtocolSchedule, CliError> {
        let s = build_cnot_protocol(self.omega_max_tp, 1.0, self.delay_tp, self.phases()).map_err(|e| CliError::Config(e.to_string()))?;
        if self.merged {
            merge_adjacent_pulses(&s).map_err(|e| CliError::config("merged", None, e))
        } else {
            Ok(s)
        }
    }

    /// Copy with one numeric key replaced.
    pub fn with_param(&self, key: &str, value: f64) -> Result<RunConfig, CliError> {
        let mut c = self.clone();
        match key {
            "omega_max_tp" => c.omega_max_tp = value,
            "g_tp" => c.g_tp = value,
            "delay_tp" => c.delay_tp = value,
            "kappa_tp" => c.kappa_tp = value,
            "tau_tp" => c.tau_tp = Some(value),
            "h_tp" => c.h_tp = Some(value),
            "n_max" => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(CliError::config(key, None, format!("must be a non-negative integer (got {value})")));
                }
                c.n_max = value as usize;
            }
            "phi1" => c.phi1 = value,
            "phi2" => c.phi2 = value,
            "phi3" => c.phi3 = value,
            "phi4" => c.phi4 = value,
            "phi5" => c.phi5 = value,
            "phi6" => c.phi6 = value,
            _ => return Err(CliError::config(key, None, format!("not a sweepable numeric key; expected one of {}", NUMERIC_KEYS.join(", ")))),
        }
        c.validate()?;
        Ok(c)
    }
}

/// One parameter scanned over a list of values.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
    pub base: RunConfig,
}

impl SweepSpec {
    pub fn new(parameter: &str, values: Vec<f64>, base: RunConfig) -> Result<Self, CliError> {
        if !NUMERIC_KEYS.contains(&parameter) {
            return Err(CliError::config(parameter, None, format!("not a sweepable numeric key; expected one of {}", NUMERIC_KEYS.join(", "))));
        }
        base.validate()?;
        Ok(Self { parameter: parameter.to_string(), values, base })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub retention_00: Option<f64>,
    pub retention_01: Option<f64>,
    pub exchange_10: Option<f64>,
    pub exchange_11: Option<f64>,
    pub status: String,
}

fn sweep_point(base: &RunConfig, key: &str, value: f64) -> SweepRow {
    let outcome = base.with_param(key, value).and_then(|c| {
        let (space, schedule, cavity) = (c.space()?, c.schedule()?, c.cavity()?);
        let model = c.lindblad_model();
        let results = run_basis_inputs(&space, &schedule, &cavity, model.as_ref(), &c.integrator())?;
        Ok(truth_table(&space, &results))
    });
    match outcome {
        Ok(t) => SweepRow {
            value,
            retention_00: Some(t.populations[0][0]),
            retention_01: Some(t.populations[1][1]),
            exchange_10: Some(t.populations[2][3]),
            exchange_11: Some(t.populations[3][2]),
            status: "ok".into(),
        },
        Err(e) => SweepRow { value, retention_00: None, retention_01: None, exchange_10: None, exchange_11: None, status: e.to_string() },
    }
}

/// Runs every sweep point; rows come back in input order.
pub fn run_sweep(spec: &SweepSpec) -> Vec<SweepRow> {
    spec.values.par_iter().map(|&v| sweep_point(&spec.base, &spec.parameter, v)).collect()
}

pub fn write_sweep_csv(path: &Path, spec: &SweepSpec, rows: &[SweepRow]) -> Result<(), CliError> {
    let out = |source| CliError::Output { path: path.to_path_buf(), source };
    let mut file = fs::File::create(path).map_err(out)?;
    writeln!(file, "{SWEEP_SCHEMA}").map_err(out)?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| CliError::Output { path: path.to_path_buf(), source: e.into() };
    w.write_record([spec.parameter.as_str(), "retention_00", "retention_01", "exchange_10", "exchange_11", "status"]).map_err(io)?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        w.write_record([r.value.to_string(), fmt(r.retention_00), fmt(r.retention_01), fmt(r.exchange_10), fmt(r.exchange_11), r.status.clone()])
            .map_err(io)?;
    }
    w.flush().map_err(out)?;
    Ok(())
}

pub fn write_timeseries_csv(path: &Path, series: &TimeSeries) -> Result<(), CliError> {
    let out = |source| CliError::Output { path: path.to_path_buf(), source };
    let mut file = fs::File::create(path).map_err(out)?;
    writeln!(file, "{TIMESERIES_SCHEMA}").map_err(out)?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| CliError::Output { path: path.to_path_buf(), source: e.into() };
    let mut header = vec!["t".to_string()];
    header.extend(series.labels.iter().map(|l| format!("p_{l}")));
    header.extend(["norm_or_trace".to_string(), "photon_expectation".to_string()]);
    w.write_record(&header).map_err(io)?;
    for i in 0..series.times.len() {
        let mut row = vec![series.times[i].to_string()];
        row.extend(series.populations[i].iter().map(|p| p.to_string()));
        row.push(series.norm_or_trace[i].to_string());
        row.push(series.photons[i].to_string());
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable report");
    fs::write(path, text + "\n").map_err(|source| CliError::Output { path: path.to_path_buf(), source })
}

#[derive(Clone, Debug, Serialize)]
pub struct InputSummary {
    pub input: String,
    pub final_populations: Vec<(String, f64)>,
    /// Fidelity to the ideal gate image of the input.
    pub target_fidelity: f64,
    pub steps: Vec<StepDiagnostics>,
    pub max_drift: f64,
    pub min_eigenvalue: Option<f64>,
    pub max_photons_cavity_steps: f64,
    pub max_excited: f64,
    pub steps_taken: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub schema: &'static str,
    pub engine: &'static str,
    pub step: f64,
    pub pulses: usize,
    pub config: RunConfig,
    pub runs: Vec<InputSummary>,
    pub truth_table: Option<TruthTable>,
}

fn summarize(space: &HilbertSpace, input: &NamedInput, result: &ProtocolResult, target: &GateMatrix) -> crate::error::Result<InputSummary> {
    let mut final_populations = Vec::new();
    for a1 in AtomLevel::GROUND {
        for a2 in AtomLevel::GROUND {
            let s = ket(a1, a2);
            final_populations.push((format!("{}{}", a1, a2), result.population(space, &s)));
        }
    }
    let image = input.image(space, target)?;
    Ok(InputSummary {
        input: input.label.to_string(),
        final_populations,
        target_fidelity: result.final_state.fidelity_to(&image),
        steps: result.steps.clone(),
        max_drift: result.max_drift,
        min_eigenvalue: result.min_eigenvalue,
        max_photons_cavity_steps: result.max_photons_cavity_steps,
        max_excited: result.max_excited,
        steps_taken: result.steps_taken,
    })
}

/// Runs the selected inputs; returns the results in selector order.
pub fn simulate(cfg: &RunConfig) -> Result<(HilbertSpace, Vec<NamedInput>, Vec<ProtocolResult>, ProtocolSchedule), CliError> {
    let (space, schedule, cavity) = (cfg.space()?, cfg.schedule()?, cfg.cavity()?);
    let model = cfg.lindblad_model();
    let integrator = cfg.integrator();
    let inputs = cfg.input.inputs();
    let states = inputs.iter().map(|i| i.state(&space)).collect::<crate::error::Result<Vec<_>>>()?;
    let results: Vec<_> =
        states.par_iter().map(|psi| run_protocol(&space, &schedule, &cavity, model.as_ref(), psi, &integrator)).collect();
    let results = results.into_iter().collect::<crate::error::Result<Vec<_>>>()?;
    Ok((space, inputs, results, schedule))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|source| CliError::Output { path: dir.clone(), source })?;
    Ok(dir)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulationSummary, CliError> {
    let (space, inputs, results, schedule) = simulate(cfg)?;
    let dir = out_dir(cfg)?;
    let target = target_composition(cfg.phases());
    let mut runs = Vec::new();
    for (input, r) in inputs.iter().zip(&results) {
        write_timeseries_csv(&dir.join(format!("timeseries_{}.csv", input.label)), &r.series)?;
        runs.push(summarize(&space, input, r, &target)?);
    }
    let table = match <&[ProtocolResult; 4]>::try_from(results.as_slice()) {
        Ok(four) if cfg.input == InputSelector::All => Some(truth_table(&space, four)),
        _ => None,
    };
    let summary = SimulationSummary {
        schema: "stirap-cnot summary v1",
        engine: if cfg.is_dissipative() { "lindblad" } else { "schrodinger" },
        step: cfg.integrator().step,
        pulses: schedule.pulse_count(),
        config: cfg.clone(),
        runs,
        truth_table: table,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct TruthTableReport {
    pub engine: &'static str,
    pub truth_table: TruthTable,
    /// Designated CNOT entry minimum and off-target maximum.
    pub cnot_margins: (f64, f64),
    pub extracted: Option<ExtractedGate>,
    pub target: GateMatrix,
    pub fidelity_to_target: Option<f64>,
}

pub fn cmd_truth_table(cfg: &RunConfig) -> Result<TruthTableReport, CliError> {
    let (space, schedule, cavity) = (cfg.space()?, cfg.schedule()?, cfg.cavity()?);
    let model = cfg.lindblad_model();
    let results = run_basis_inputs(&space, &schedule, &cavity, model.as_ref(), &cfg.integrator())?;
    let table = truth_table(&space, &results);
    let target = target_composition(cfg.phases());
    let extracted = if model.is_none() { Some(gate_from_results(&space, &results)?) } else { None };
    let report = TruthTableReport {
        engine: if model.is_some() { "lindblad" } else { "schrodinger" },
        cnot_margins: table.cnot_margins(),
        fidelity_to_target: extracted.as_ref().map(|g| gate_fidelity(&g.gate, &target)),
        truth_table: table,
        extracted,
        target,
    };
    write_json(&out_dir(cfg)?.join("truth_table.json"), &report)?;
    if !report.truth_table.failed_rows.is_empty() {
        return Err(CliError::Verification(format!("inputs {:?} leaked below the floor", report.truth_table.failed_rows)));
    }
    if let Some(g) = report.extracted.as_ref().filter(|g| g.flagged) {
        return Err(CliError::Verification(format!("unitarity deviation {:.3e}", g.unitarity_deviation)));
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct CompositionReport {
    pub phases: [f64; 6],
    pub target: GateMatrix,
    pub extracted: Option<ExtractedGate>,
    pub fidelity: Option<f64>,
}

pub fn cmd_compose_phases(cfg: &RunConfig, target_only: bool) -> Result<CompositionReport, CliError> {
    let target = target_composition(cfg.phases());
    let mut report = CompositionReport { phases: cfg.phases(), target, extracted: None, fidelity: None };
    if !target_only {
        if cfg.is_dissipative() {
            return Err(CliError::config("kappa_tp", None, "gate extraction needs kappa_tp = 0 and no tau_tp"));
        }
        let (space, schedule, cavity) = (cfg.space()?, cfg.schedule()?, cfg.cavity()?);
        let results = run_basis_inputs(&space, &schedule, &cavity, None, &cfg.integrator())?;
        let g = gate_from_results(&space, &results)?;
        report.fidelity = Some(gate_fidelity(&g.gate, &target));
        report.extracted = Some(g);
    }
    write_json(&out_dir(cfg)?.join("composition.json"), &report)?;
    match report.fidelity {
        Some(f) if f < COMPOSITION_THRESHOLD => Err(CliError::Verification(format!("gate fidelity {f:.6} below {COMPOSITION_THRESHOLD}"))),
        _ => Ok(report),
    }
}

pub fn cmd_verify_darkstates(cfg: &RunConfig) -> Result<Vec<StepDarkReport>, CliError> {
    let (space, schedule, cavity) = (cfg.space()?, cfg.schedule()?, cfg.cavity()?);
    let reports = verify_dark_states(&space, &schedule, &cavity, 41, 801)?;
    write_json(&out_dir(cfg)?.join("darkstates.json"), &reports)?;
    let failed: Vec<usize> = reports.iter().filter(|r| !r.passes()).map(|r| r.step).collect();
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(CliError::Verification(format!("dark-state checks failed in steps {failed:?}")))
    }
}

pub fn basis_csv(space: &HilbertSpace) -> String {
    let mut s = String::from("index,label,atom1,atom2,photons\n");
    for (i, b) in space.states().iter().enumerate() {
        s.push_str(&format!("{i},{b},{},{},{}\n", b.atom1, b.atom2, b.photons));
    }
    s
}

/// Nonzero elements of `H(t)`, row-major.
pub fn hamiltonian_csv(space: &HilbertSpace, schedule: &ProtocolSchedule, cavity: &CavityParams, t: f64) -> crate::error::Result<String> {
    let h = HamiltonianAssembler::new(space, cavity).assemble(&active_couplings(schedule, t))?.to_dense();
    let mut s = format!("# t = {t}\nrow,col,row_state,col_state,re,im\n");
    for r in 0..space.dim() {
        for c in 0..space.dim() {
            let z = h.0[(r, c)];
            if z.norm() > 0.0 {
                s.push_str(&format!("{r},{c},{},{},{},{}\n", space.states()[r], space.states()[c], z.re, z.im));
            }
        }
    }
    Ok(s)
}

#[derive(Parser, Debug)]
#[command(name = "stirap-cnot", version, about = "Adiabatic-passage CNOT simulator for two five-level atoms in a cavity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML configuration file (flat keys, units of T_p)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Input state(s) to propagate
    #[arg(long, global = true, value_enum)]
    pub input: Option<InputSelector>,
    /// Merge the two adjacent pulses of steps 3 and 4 into one
    #[arg(long, global = true)]
    pub merged: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Propagate the selected inputs and write time series plus a summary
    Simulate(#[command(flatten)] CommonArgs),
    /// Scan one numeric key over a list of values
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Key to scan, e.g. kappa_tp
        #[arg(long)]
        param: String,
        /// Comma-separated values; may be empty
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        values: String,
    },
    /// Four basis inputs: populations, extracted gate and fidelity
    TruthTable(#[command(flatten)] CommonArgs),
    /// Analytic gate for the configured step phases, checked against simulation
    ComposePhases {
        #[command(flatten)]
        common: CommonArgs,
        /// Skip the simulation and only print the analytic gate
        #[arg(long)]
        target_only: bool,
    },
    /// Residual, support, kernel and geometric-coupling checks of all dark states
    VerifyDarkstates(#[command(flatten)] CommonArgs),
    /// List the basis in index order
    DumpBasis(#[command(flatten)] CommonArgs),
    /// Print the nonzero Hamiltonian elements at one time
    DumpHamiltonian {
        #[command(flatten)]
        common: CommonArgs,
        /// Time in units of T_p; defaults to the middle of step 2
        #[arg(long, allow_hyphen_values = true)]
        time: Option<f64>,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(c) | Command::TruthTable(c) | Command::VerifyDarkstates(c) | Command::DumpBasis(c) => c,
            Command::Sweep { common, .. } | Command::ComposePhases { common, .. } | Command::DumpHamiltonian { common, .. } => common,
        }
    }
}

/// Loads the config file (if any) and applies command-line overrides.
pub fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(o) = &args.out {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(i) = args.input {
        cfg.input = i;
    }
    cfg.merged |= args.merged;
    Ok(cfg)
}

fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| CliError::config("values", None, format!("`{s}`: {e}"))))
        .collect()
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable report"));
}

/// Executes a parsed command line.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.command.common())?;
    match &cli.command {
        Command::Simulate(_) => {
            let s = cmd_simulate(&cfg)?;
            for r in &s.runs {
                println!("{:>4}  target fidelity {:.6}  max drift {:.2e}", r.input, r.target_fidelity, r.max_drift);
            }
        }
        Command::Sweep { param, values, .. } => {
            let spec = SweepSpec::new(param, parse_values(values)?, cfg.clone())?;
            let rows = run_sweep(&spec);
            let path = out_dir(&cfg)?.join("sweep.csv");
            write_sweep_csv(&path, &spec, &rows)?;
            println!("{} rows written to {}", rows.len(), path.display());
        }
        Command::TruthTable(_) => {
            let r = cmd_truth_table(&cfg)?;
            for (label, row) in ["00", "01", "10", "11"].iter().zip(r.truth_table.populations) {
                println!("{label} -> {:.6} {:.6} {:.6} {:.6}", row[0], row[1], row[2], row[3]);
            }
            if let Some(f) = r.fidelity_to_target {
                println!("gate fidelity {f:.6}");
            }
        }
        Command::ComposePhases { target_only, .. } => print_json(&cmd_compose_phases(&cfg, *target_only)?),
        Command::VerifyDarkstates(_) => {
            for r in cmd_verify_darkstates(&cfg)? {
                println!("step {}: residual {:.2e} geometric {:.2e} ok", r.step, r.max_residual_ratio, r.geometric_max);
            }
        }
        Command::DumpBasis(_) => emit(&cfg, "basis.csv", &basis_csv(&cfg.space()?))?,
        Command::DumpHamiltonian { time, .. } => {
            let schedule = cfg.schedule()?;
            let t = time.unwrap_or_else(|| {
                let s = schedule.step(2).expect("six steps");
                0.5 * (s.first_center + s.second_center)
            });
            emit(&cfg, "hamiltonian.csv", &hamiltonian_csv(&cfg.space()?, &schedule, &cfg.cavity()?, t)?)?;
        }
    }
    Ok(())
}

/// Writes to `<out>/<name>` when an output directory is set, else stdout.
fn emit(cfg: &RunConfig, name: &str, body: &str) -> Result<(), CliError> {
    match &cfg.out_dir {
        Some(_) => {
            let path = out_dir(cfg)?.join(name);
            fs::write(&path, body).map_err(|source| CliError::Output { path, source })
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_point() {
        let c = parse_config("omega_max_tp = 10\ng_tp = 25").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.delay_tp, 1.2);
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn errors_name_key_and_line() {
        let e = parse_config("# rates\nomega_max_tp = 10\ng_tp = -1\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("g_tp") && msg.contains("line 3"), "{msg}");
        assert_eq!(e.exit_code(), 2);

        let msg = parse_config("kappa = 0.5").unwrap_err().to_string();
        assert!(msg.contains("kappa") && msg.contains("line 1"), "{msg}");
        let msg = parse_config("g_tp = \"lots\"").unwrap_err().to_string();
        assert!(msg.contains("g_tp"), "{msg}");
        let msg = parse_config("n_max = 1").unwrap_err().to_string();
        assert!(msg.contains("n_max"), "{msg}");
    }

    #[test]
    fn scientific_notation_and_comments() {
        let c = parse_config("kappa_tp = 5e-1 # cavity loss\ntau_tp = 1.0e3\ninput = \"bell\"\nmerged = true").unwrap();
        assert_eq!(c.kappa_tp, 0.5);
        assert_eq!(c.tau_tp, Some(1000.0));
        assert_eq!(c.input, InputSelector::Bell);
        assert!(c.is_dissipative());
        assert_eq!(c.integrator().step, DEFAULT_LINDBLAD_STEP);
        assert_eq!(RunConfig::default().integrator().step, crate::dynamics::DEFAULT_STEP);
        let f = parse_config("kappa_tp = 0.5\nkappa_convention = \"field\"").unwrap();
        assert_eq!(f.lindblad_model().unwrap().kappa, 1.0);
        assert!(parse_config("kappa_convention = \"amplitude\"").is_err());
    }

    #[test]
    fn sweep_keys() {
        let base = RunConfig::default();
        assert!(SweepSpec::new("kappa_tp", vec![0.5], base.clone()).is_ok());
        assert!(SweepSpec::new("input", vec![0.5], base.clone()).is_err());
        assert!(base.with_param("n_max", 2.5).is_err());
        assert_eq!(base.with_param("phi3", 0.25).unwrap().phi3, 0.25);
        assert!(base.with_param("g_tp", -2.0).is_err());
        assert_eq!(parse_values("").unwrap(), Vec::<f64>::new());
        assert_eq!(parse_values("0.5, 5e-2").unwrap(), vec![0.5, 0.05]);
        assert!(parse_values("0.5,x").is_err());
    }

    #[test]
    fn bell_image_under_cnot() {
        let space = build_space(2).unwrap();
        let bell = &InputSelector::Bell.inputs()[0];
        let img = bell.image(&space, &crate::gateanalysis::cnot()).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((img.amplitude(&space, &ket(AtomLevel::G0, AtomLevel::G0)).re - r).abs() < 1e-15);
        assert!((img.amplitude(&space, &ket(AtomLevel::G1, AtomLevel::G0)).re - r).abs() < 1e-15);
    }

    #[test]
    fn basis_listing() {
        let space = build_space(2).unwrap();
        let csv = basis_csv(&space);
        assert_eq!(csv.lines().count(), 76);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,"));
    }
}
