//! Scenario files.
//!
//! A scenario is UTF-8 TOML restricted to one level of `[section]` tables
//! holding `key = value` pairs. Values are numbers in SI units, booleans,
//! strings, or arrays of strings. Every key is optional and falls back to a
//! default; unknown sections and keys are rejected. See
//! `scenarios/conformance.toml` for every key with its default.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::detection::{DetectionError, DetectorModel};
use crate::gates::{gate_timing, GateError, GateNoise, CALIBRATED_GATE_DEPOLARIZING, DEFAULT_DETUNING_HZ};
use crate::netsim::{NetsimError, ProtocolConfig, ProtocolScript};
use crate::phase::{MemoryDecoherence, PhaseError, PhaseLedger};
use crate::photonic::{LinkBudget, LinkError, LinkErrorModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateSection {
    /// Intramodular phase of the entangling gate, rad.
    pub phi_a: f64,
    pub depolarizing_p: f64,
    /// Sideband detuning, Hz.
    pub detuning_hz: f64,
}

impl Default for GateSection {
    fn default() -> Self {
        Self {
            phi_a: 0.0,
            depolarizing_p: CALIBRATED_GATE_DEPOLARIZING,
            detuning_hz: DEFAULT_DETUNING_HZ,
        }
    }
}

impl GateSection {
    pub fn noise(&self) -> GateNoise {
        GateNoise {
            depolarizing_p: self.depolarizing_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    /// Qubits as `name:module`, first bit of every outcome first.
    pub qubits: Vec<String>,
    pub steps: Vec<String>,
    /// Qubit pair whose parity is analyzed.
    pub parity: Vec<String>,
    /// Qubit the parity is conditioned on; empty for none.
    pub condition: String,
    /// Depolarizing probability on same-module neighbours of a re-initialized qubit.
    pub reinit_crosstalk_p: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            qubits: ["q1:A", "q2:A", "q3:B"].map(String::from).to_vec(),
            steps: ["herald q2 q3", "reinit q1", "ms q1 q2", "rotate q1,q2 pi/2 scan", "measure"]
                .map(String::from)
                .to_vec(),
            parity: ["q1", "q2"].map(String::from).to_vec(),
            condition: "q3".into(),
            reinit_crosstalk_p: 0.0,
        }
    }
}

impl ProtocolSection {
    pub fn condition(&self) -> Option<&str> {
        (!self.condition.is_empty()).then_some(self.condition.as_str())
    }

    pub fn script(&self) -> Result<ProtocolScript, NetsimError> {
        let q: Vec<&str> = self.qubits.iter().map(String::as_str).collect();
        let s: Vec<&str> = self.steps.iter().map(String::as_str).collect();
        ProtocolScript::new(&q, &s)
    }
}

/// Integers up to `u64::MAX`; values beyond the TOML integer range are
/// written as decimal strings.
mod seed_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*v) {
            Ok(i) => s.serialize_i64(i),
            Err(_) => s.serialize_str(&v.to_string()),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(i) => u64::try_from(i).map_err(|_| serde::de::Error::custom("seed must be non-negative")),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Sampled herald waiting times for rate fits.
    pub n_trials: usize,
    #[serde(with = "seed_serde")]
    pub seed: u64,
    pub shots_per_point: usize,
    /// Analysis phases, evenly spaced over `[0, pi)`.
    pub phase_points: usize,
    /// Wait times of the phase-evolution scan, evenly spaced over `[0, wait_max_s]`.
    pub wait_points: usize,
    pub wait_max_s: f64,
    /// Storage times of the coherence scan, evenly spaced over `[0, coherence_max_s]`.
    pub coherence_points: usize,
    pub coherence_max_s: f64,
    /// Distance between the entangled qubits, m.
    pub qubit_separation_m: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_trials: 100_000,
            seed: 1,
            shots_per_point: 10_000,
            phase_points: 12,
            wait_points: 41,
            wait_max_s: 1e-3,
            coherence_points: 31,
            coherence_max_s: 3.0,
            qubit_separation_m: 1.0,
        }
    }
}

impl RunSection {
    pub fn phase_grid(&self) -> Vec<f64> {
        (0..self.phase_points).map(|i| PI * i as f64 / self.phase_points as f64).collect()
    }

    pub fn wait_grid(&self) -> Vec<f64> {
        linspace(self.wait_max_s, self.wait_points)
    }

    pub fn coherence_grid(&self) -> Vec<f64> {
        linspace(self.coherence_max_s, self.coherence_points)
    }
}

fn linspace(max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub link_budget: LinkBudget,
    pub link_errors: LinkErrorModel,
    pub gate: GateSection,
    pub phase_ledger: PhaseLedger,
    pub memory: MemoryDecoherence,
    pub detectors: DetectorModel,
    pub protocol: ProtocolSection,
    pub run: RunSection,
}

/// Keys that may be absent from an emitted scenario.
const OPTIONAL_KEYS: [&str; 1] = ["memory.even_tau_s"];

/// A validated scenario with the list of keys that took their default.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub defaulted: Vec<String>,
    pub warnings: Vec<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn known_keys() -> BTreeSet<String> {
    let table = toml::Table::try_from(Scenario::default()).expect("default scenario serializes");
    let mut keys: BTreeSet<String> = OPTIONAL_KEYS.iter().map(|k| k.to_string()).collect();
    for (section, v) in &table {
        if let toml::Value::Table(t) = v {
            keys.extend(t.keys().map(|k| format!("{section}.{k}")));
        }
    }
    keys
}

impl Scenario {
    /// Parses scenario text; see the module documentation for the grammar.
    pub fn parse(text: &str) -> Result<LoadedScenario, ConfigError> {
        let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let known = known_keys();
        let sections: BTreeSet<&str> = known.iter().filter_map(|k| k.split('.').next()).collect();
        let mut present = BTreeSet::new();
        for (section, v) in &raw {
            if !sections.contains(section.as_str()) {
                return Err(ConfigError::UnknownKey(section.clone()));
            }
            let toml::Value::Table(t) = v else {
                return Err(invalid(section.as_str(), "expected a [section]"));
            };
            for (k, v) in t {
                let path = format!("{section}.{k}");
                if !known.contains(&path) {
                    return Err(ConfigError::UnknownKey(path));
                }
                if matches!(v, toml::Value::Table(_)) {
                    return Err(invalid(path, "nested tables are not supported"));
                }
                present.insert(path);
            }
        }
        let scenario: Scenario = toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let warnings = scenario.validate()?;
        let defaulted = known
            .into_iter()
            .filter(|k| !present.contains(k) && !OPTIONAL_KEYS.contains(&k.as_str()))
            .collect();
        Ok(LoadedScenario {
            scenario,
            defaulted,
            warnings,
        })
    }

    /// Text form accepted by [`Scenario::parse`]; parsing it yields `self`.
    pub fn emit(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Checks every invariant; returns warnings for accepted oddities.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let mut warnings = Vec::new();
        let link = |section: &str, e: LinkError| match e {
            LinkError::OutOfRange { field, value } => invalid(format!("{section}.{field}"), format!("{value} outside [0, 1]")),
            LinkError::BadRepRate(_) => invalid(format!("{section}.rep_rate"), e),
            other => invalid(section, other),
        };
        self.link_budget.validate().map_err(|e| link("link_budget", e))?;
        self.link_errors.validate().map_err(|e| link("link_errors", e))?;

        if !self.gate.phi_a.is_finite() {
            return Err(invalid("gate.phi_a", "must be finite"));
        }
        self.gate.noise().validate().map_err(|e| invalid("gate.depolarizing_p", e))?;
        gate_timing(self.gate.detuning_hz).map_err(|e: GateError| invalid("gate.detuning_hz", e))?;

        let l = &self.phase_ledger;
        for (k, v) in [
            ("delta_omega_ab", l.delta_omega_ab),
            ("k", l.k),
            ("delta_tau", l.delta_tau),
            ("delta_x", l.delta_x),
            ("delta_phi_t", l.delta_phi_t),
        ] {
            if !v.is_finite() {
                return Err(invalid(format!("phase_ledger.{k}"), "must be finite"));
            }
        }
        let geometric_path = |e: &PhaseError| match e {
            PhaseError::GeometricPhaseTooLarge { name: "k*delta_x", .. } => "phase_ledger.delta_x",
            _ => "phase_ledger.delta_tau",
        };
        match l.validate() {
            Ok(w) => warnings.extend(w.iter().map(|e| format!("{}: {e}", geometric_path(e)))),
            Err(e) => return Err(invalid(geometric_path(&e), e)),
        }

        if !(self.memory.tau_s > 0.0 && self.memory.tau_s.is_finite()) {
            return Err(invalid("memory.tau_s", format!("must be positive, got {}", self.memory.tau_s)));
        }
        if let Some(t) = self.memory.even_tau_s {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("memory.even_tau_s", format!("must be positive, got {t}")));
            }
        }

        self.detectors.validate().map_err(|e| match e {
            DetectionError::OutOfRange { field, .. } => invalid(format!("detectors.{field}"), e),
            other => invalid("detectors", other),
        })?;

        let p = &self.protocol;
        let script = p.script().map_err(|e| match e {
            NetsimError::Script { step, message } => invalid(format!("protocol.steps[{step}]"), message),
            other => invalid("protocol.steps", other),
        })?;
        let modules = script.modules();
        self.detectors
            .layout_for(&modules)
            .map_err(|e| invalid("detectors.shared_modules", e))?;
        if p.parity.len() != 2 || p.parity[0] == p.parity[1] {
            return Err(invalid("protocol.parity", "must name two distinct qubits"));
        }
        for q in &p.parity {
            if script.index_of(q).is_none() {
                return Err(invalid("protocol.parity", format!("undeclared qubit `{q}`")));
            }
        }
        if !p.condition.is_empty() {
            let c = &p.condition;
            if script.index_of(c).is_none() || p.parity.contains(c) {
                return Err(invalid("protocol.condition", format!("`{c}` must be a declared qubit outside the parity pair")));
            }
        }
        if !(0.0..=1.0).contains(&p.reinit_crosstalk_p) {
            return Err(invalid("protocol.reinit_crosstalk_p", "outside [0, 1]"));
        }

        let r = &self.run;
        for (k, v, min) in [
            ("n_trials", r.n_trials, 1),
            ("shots_per_point", r.shots_per_point, 1),
            ("phase_points", r.phase_points, 3),
            ("wait_points", r.wait_points, 3),
            ("coherence_points", r.coherence_points, 3),
        ] {
            if v < min {
                return Err(invalid(format!("run.{k}"), format!("must be at least {min}, got {v}")));
            }
        }
        for (k, v) in [
            ("wait_max_s", r.wait_max_s),
            ("coherence_max_s", r.coherence_max_s),
            ("qubit_separation_m", r.qubit_separation_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("run.{k}"), format!("must be positive, got {v}")));
            }
        }
        Ok(warnings)
    }

    /// Physical parameters for the protocol engine.
    pub fn protocol_config(&self) -> ProtocolConfig {
        ProtocolConfig {
            budget: self.link_budget,
            link_errors: self.link_errors,
            phi_a: self.gate.phi_a,
            gate_noise: self.gate.noise(),
            gate_time_s: gate_timing(self.gate.detuning_hz).map_or(0.0, |t| t.gate_time_s),
            ledger: self.phase_ledger,
            memory: self.memory.enabled.then_some(self.memory),
            detectors: self.detectors.clone(),
            reinit_crosstalk_p: self.protocol.reinit_crosstalk_p,
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Scenario::parse(&text)
}
