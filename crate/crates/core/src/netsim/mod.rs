//! Monte Carlo execution of modular network protocols.
//!
//! Every scan point is first evolved exactly: one pre-measurement density
//! matrix per herald outcome. Trials then sample the herald wait, the herald
//! outcome, the measured bits and the detector response from those states,
//! so the sampled and exact statistics share all channel code.
//!
//! Random streams: trial `i` of scan point `j` draws from a ChaCha8 generator
//! seeded with the root seed and switched to stream `j * shots + i`. Results
//! therefore do not depend on thread scheduling.

mod script;
pub mod stats;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::detection::{apply_confusion, apply_readout, DetectionError, DetectorLayout, DetectorModel};
use crate::gates::{gate_timing, ms_gate, rotate_all, GateError, GateNoise};
use crate::phase::{evolve_entangled_state, MemoryDecoherence, PhaseError, PhaseLedger};
use crate::photonic::{
    herald_branches, prepare_flying_qubit, success_probability, DetectorPair, HeraldEvent, LinkBudget, LinkError,
    LinkErrorModel,
};
use crate::state::{QuantumState, StateError};

pub use script::{parse_angle, Param, ProtocolScript, Qubit, Step};
pub use stats::{
    binomial_estimate, fit_cosine, fit_exponential_decay, fit_rate, fit_rate_times, ks_test_exponential,
    parity_estimate, CosineFit, DecayFit, Estimate, KsResult, RateFit,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetsimError {
    #[error("protocol step {step}: {message}")]
    Script { step: usize, message: String },
    #[error("link success probability is zero; the herald would never occur")]
    ZeroSuccessProbability,
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("fit rejected: {0}")]
    DegenerateFit(String),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Samples the number of excitation attempts until a herald and the
/// corresponding wall time.
pub fn sample_waiting<R: Rng + ?Sized>(link: &LinkBudget, rng: &mut R) -> Result<(u64, f64), NetsimError> {
    let p = success_probability(link);
    if !(p > 0.0) {
        return Err(NetsimError::ZeroSuccessProbability);
    }
    let attempts = if p >= 1.0 {
        1
    } else {
        // Inverse CDF of the geometric distribution on {1, 2, ...}.
        let u = 1.0 - rng.random::<f64>();
        (u.ln() / (-p).ln_1p()).ceil().max(1.0) as u64
    };
    Ok((attempts, attempts as f64 / link.rep_rate))
}

/// Coherent entanglement distance `d_q R tau`.
pub fn coherent_entanglement_distance(d_q: f64, rate: f64, tau: f64) -> Result<f64, NetsimError> {
    for (name, value) in [("d_q", d_q), ("R", rate), ("tau", tau)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(NetsimError::NonPositive { name, value });
        }
    }
    Ok(d_q * rate * tau)
}

/// Physical parameters a protocol runs under.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub budget: LinkBudget,
    pub link_errors: LinkErrorModel,
    pub phi_a: f64,
    pub gate_noise: GateNoise,
    pub gate_time_s: f64,
    pub ledger: PhaseLedger,
    pub memory: Option<MemoryDecoherence>,
    pub detectors: DetectorModel,
    /// Depolarizing probability applied to the other qubits of a module when
    /// one of its qubits is re-initialized.
    pub reinit_crosstalk_p: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            budget: LinkBudget::default(),
            link_errors: LinkErrorModel::default(),
            phi_a: 0.0,
            gate_noise: GateNoise::default(),
            gate_time_s: gate_timing(crate::gates::DEFAULT_DETUNING_HZ)
                .map(|t| t.gate_time_s)
                .unwrap_or(0.0),
            ledger: PhaseLedger::default(),
            memory: Some(MemoryDecoherence::default()),
            detectors: DetectorModel::default(),
            reinit_crosstalk_p: 0.0,
        }
    }
}

impl ProtocolConfig {
    /// Ideal channels, ideal detectors, no decoherence; timing and phase
    /// bookkeeping unchanged.
    pub fn noiseless() -> Self {
        Self {
            link_errors: LinkErrorModel::ideal(),
            gate_noise: GateNoise::noiseless(),
            memory: None,
            detectors: DetectorModel::ideal(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NetsimError> {
        self.budget.validate()?;
        self.link_errors.validate()?;
        self.gate_noise.validate()?;
        if let Some(m) = &self.memory {
            m.validate()?;
        }
        self.ledger.validate()?;
        self.detectors.validate()?;
        if !(0.0..=1.0).contains(&self.reinit_crosstalk_p) {
            return Err(NetsimError::Invalid(format!(
                "reinit_crosstalk_p = {} outside [0, 1]",
                self.reinit_crosstalk_p
            )));
        }
        if !(self.gate_time_s >= 0.0) {
            return Err(NetsimError::Invalid(format!("gate time {} is negative", self.gate_time_s)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub herald: Option<HeraldEvent>,
    /// Excitation attempts spent on the herald; 0 for scripts without one.
    pub attempts_used: u64,
    pub wall_time_s: f64,
    /// Reported bits in declared qubit order.
    pub outcome_bits: Vec<u8>,
    /// Value of the scanned parameter (the analysis phase for phase scans).
    pub analysis_phase: f64,
    pub scan_index: usize,
}

/// Pre-measurement state for one herald outcome.
#[derive(Debug, Clone)]
pub struct BranchResult {
    pub pair: Option<DetectorPair>,
    /// Probability of this outcome given a herald.
    pub probability: f64,
    pub state: QuantumState,
    /// Outcome distribution without detection error.
    pub true_probs: Vec<f64>,
    /// Outcome distribution seen through the detectors.
    pub reported_probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub scan_value: f64,
    /// Deterministic time spent in the script besides the herald wait.
    pub step_time_s: f64,
    pub branches: Vec<BranchResult>,
}

/// Selects which herald outcomes contribute to a statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchFilter {
    All,
    Pair(DetectorPair),
    /// Detector phase 0 (`false`) or pi (`true`).
    DetectorPhasePi(bool),
}

impl BranchFilter {
    fn accepts(self, pair: Option<DetectorPair>) -> bool {
        match (self, pair) {
            (BranchFilter::All, _) => true,
            (BranchFilter::Pair(p), Some(q)) => p == q,
            (BranchFilter::DetectorPhasePi(pi), Some(q)) => (q.phi_d() != 0.0) == pi,
            _ => false,
        }
    }
}

/// A bit value a statistic is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Condition {
    pub qubit: usize,
    pub value: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub estimate: f64,
    pub uncertainty: f64,
    /// Exact value through the detector model.
    pub exact: f64,
    /// Exact value without detection error.
    pub exact_corrected: f64,
}

#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub labels: Vec<String>,
    pub points: Vec<PointResult>,
    /// Trials ordered by scan point, then trial index.
    pub records: Vec<TrialRecord>,
    /// Exponential fit of the wall times, when the script heralds and the
    /// fit is accepted.
    pub rate: Option<RateFit>,
    pub shots_per_point: usize,
}

fn bit(index: usize, n: usize, k: usize) -> u8 {
    ((index >> (n - 1 - k)) & 1) as u8
}

fn index_of_bits(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| acc << 1 | b as usize)
}

struct PairLink<'a> {
    pair: (String, String),
    ledger: &'a PhaseLedger,
    memory: Option<&'a MemoryDecoherence>,
}

impl PairLink<'_> {
    fn evolve(&self, s: &QuantumState, dt: f64) -> Result<QuantumState, NetsimError> {
        if dt == 0.0 {
            return Ok(s.clone());
        }
        Ok(evolve_entangled_state(s, (&self.pair.0, &self.pair.1), self.ledger, self.memory, dt)?)
    }
}

/// Exact pre-measurement states of every herald outcome at one scan value.
pub fn evolve_point(
    script: &ProtocolScript,
    config: &ProtocolConfig,
    scan_value: f64,
) -> Result<PointResult, NetsimError> {
    let names = script.names();
    let zeros = vec![0u8; names.len()];
    let mut branches: Vec<(Option<DetectorPair>, f64, QuantumState)> =
        vec![(None, 1.0, QuantumState::basis(&names, &zeros)?)];
    let mut link: Option<PairLink> = None;
    let mut step_time = 0.0;
    for step in script.steps() {
        let mut dt = 0.0;
        match step {
            Step::Herald { a, b } => {
                let fa = prepare_flying_qubit(&config.link_errors, a, "photon_a")?;
                let fb = prepare_flying_qubit(&config.link_errors, b, "photon_b")?;
                let outcomes =
                    herald_branches(&fa, &fb, config.link_errors.mode_overlap, config.ledger.static_phase())?;
                let total: f64 = outcomes.iter().map(|o| o.probability).sum();
                if !(total > 0.0) {
                    return Err(NetsimError::Invalid("emitted photons can never herald".into()));
                }
                let others: Vec<&str> = names.iter().copied().filter(|n| n != a && n != b).collect();
                let mut next = Vec::with_capacity(branches.len() * outcomes.len());
                for (_, w, s) in &branches {
                    let rest = if others.is_empty() {
                        None
                    } else {
                        Some(s.partial_trace(&others)?)
                    };
                    for o in &outcomes {
                        let joint = match &rest {
                            Some(r) => r.tensor(&o.state)?.permute(&names)?,
                            None => o.state.permute(&names)?,
                        };
                        next.push((Some(o.pair), w * o.probability / total, joint));
                    }
                }
                branches = next;
                link = Some(PairLink {
                    pair: (a.clone(), b.clone()),
                    ledger: &config.ledger,
                    memory: config.memory.as_ref(),
                });
            }
            Step::Reinit { qubit } => {
                let module = script.module_of(qubit);
                let neighbours: Vec<&str> = script
                    .qubits()
                    .iter()
                    .filter(|q| Some(q.module.as_str()) == module && &q.name != qubit)
                    .map(|q| q.name.as_str())
                    .collect();
                for (_, _, s) in branches.iter_mut() {
                    let mut r = s.reset(qubit)?;
                    if config.reinit_crosstalk_p > 0.0 {
                        for n in &neighbours {
                            r = r.depolarize(&[n], config.reinit_crosstalk_p)?;
                        }
                    }
                    *s = r;
                }
            }
            Step::Ms { a, b, phi_a } => {
                let phi = phi_a.unwrap_or(config.phi_a);
                for (_, _, s) in branches.iter_mut() {
                    *s = ms_gate(s, (a, b), phi, &config.gate_noise)?;
                }
                dt = config.gate_time_s;
            }
            Step::Rotate { targets, theta, phi } => {
                let t: Vec<&str> = targets.iter().map(String::as_str).collect();
                let phi = phi.resolve(scan_value);
                for (_, _, s) in branches.iter_mut() {
                    *s = rotate_all(s, &t, *theta, phi)?;
                }
            }
            Step::Wait { duration } => {
                dt = duration.resolve(scan_value);
                if !(dt >= 0.0) {
                    return Err(NetsimError::Invalid(format!("negative wait {dt} at scan value {scan_value}")));
                }
            }
            Step::Measure => {}
        }
        if dt > 0.0 {
            step_time += dt;
            if let Some(l) = &link {
                for (_, _, s) in branches.iter_mut() {
                    *s = l.evolve(s, dt)?;
                }
            }
        }
    }
    let layout = config.detectors.layout_for(&script.modules())?;
    let branches = branches
        .into_iter()
        .map(|(pair, probability, state)| {
            let true_probs = state.probabilities();
            let reported_probs = apply_confusion(&true_probs, &config.detectors, &layout);
            BranchResult {
                pair,
                probability,
                state,
                true_probs,
                reported_probs,
            }
        })
        .collect();
    Ok(PointResult {
        scan_value,
        step_time_s: step_time,
        branches,
    })
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Random stream of one trial.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    point: &PointResult,
    scan_index: usize,
    heralds: bool,
    config: &ProtocolConfig,
    layout: &DetectorLayout,
    n_bits: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrialRecord, NetsimError> {
    let (attempts, herald_time) = if heralds {
        sample_waiting(&config.budget, rng)?
    } else {
        (0, 0.0)
    };
    let weights: Vec<f64> = point.branches.iter().map(|b| b.probability).collect();
    let branch = &point.branches[sample_index(&weights, rng)];
    let idx = sample_index(&branch.true_probs, rng);
    let true_bits: Vec<u8> = (0..n_bits).map(|k| bit(idx, n_bits, k)).collect();
    let outcome_bits = apply_readout(&true_bits, &config.detectors, layout, rng)?;
    Ok(TrialRecord {
        herald: branch.pair.map(|p| HeraldEvent::new(p, attempts, config.budget.rep_rate)),
        attempts_used: attempts,
        wall_time_s: herald_time + point.step_time_s,
        outcome_bits,
        analysis_phase: point.scan_value,
        scan_index,
    })
}

/// Runs `shots_per_point` trials at every scan value (a single point at 0
/// when the script has no scanned parameter).
pub fn run_protocol(
    script: &ProtocolScript,
    config: &ProtocolConfig,
    scan: &[f64],
    shots_per_point: usize,
    seed: u64,
) -> Result<ProtocolResult, NetsimError> {
    config.validate()?;
    let heralds = script.herald_pair().is_some();
    if heralds && !(success_probability(&config.budget) > 0.0) {
        return Err(NetsimError::ZeroSuccessProbability);
    }
    let scan: Vec<f64> = if script.has_scan() {
        if scan.is_empty() {
            return Err(NetsimError::Invalid("script scans a parameter but the scan grid is empty".into()));
        }
        scan.to_vec()
    } else {
        vec![0.0]
    };
    let points = scan
        .par_iter()
        .map(|&x| evolve_point(script, config, x))
        .collect::<Result<Vec<_>, _>>()?;
    let layout = config.detectors.layout_for(&script.modules())?;
    let n_bits = script.qubits().len();
    let total = points.len() * shots_per_point;
    let records = (0..total)
        .into_par_iter()
        .map(|g| {
            let j = g / shots_per_point;
            let mut rng = trial_rng(seed, g as u64);
            run_trial(&points[j], j, heralds, config, &layout, n_bits, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rate = if heralds { fit_rate(&records).ok() } else { None };
    Ok(ProtocolResult {
        labels: script.names().iter().map(|s| s.to_string()).collect(),
        points,
        records,
        rate,
        shots_per_point,
    })
}

impl ProtocolResult {
    fn n_bits(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn point_records(&self, j: usize) -> &[TrialRecord] {
        &self.records[j * self.shots_per_point..(j + 1) * self.shots_per_point]
    }

    /// Exact reported (or true, when `corrected`) distribution at point `j`,
    /// averaged over the accepted herald outcomes and renormalized.
    pub fn exact_distribution(&self, j: usize, filter: BranchFilter, corrected: bool) -> Vec<f64> {
        let n = 1 << self.n_bits();
        let mut out = vec![0.0; n];
        let mut w = 0.0;
        for b in self.points[j].branches.iter().filter(|b| filter.accepts(b.pair)) {
            let probs = if corrected { &b.true_probs } else { &b.reported_probs };
            for (o, p) in out.iter_mut().zip(probs) {
                *o += b.probability * p;
            }
            w += b.probability;
        }
        if w > 0.0 {
            out.iter_mut().for_each(|o| *o /= w);
        }
        out
    }

    /// Sampled counts of reported outcomes at point `j`.
    pub fn counts(&self, j: usize, filter: BranchFilter) -> Vec<u64> {
        let mut c = vec![0u64; 1 << self.n_bits()];
        for r in self.point_records(j) {
            if filter.accepts(r.herald.map(|h| h.detector_pair)) {
                c[index_of_bits(&r.outcome_bits)] += 1;
            }
        }
        c
    }

    /// Marginal populations of `qubits` at point `j`, optionally conditioned
    /// on another bit. Returns sampled estimates with exact values.
    pub fn populations(
        &self,
        j: usize,
        qubits: &[usize],
        condition: Option<Condition>,
        filter: BranchFilter,
    ) -> Vec<CurvePoint> {
        let n = self.n_bits();
        let k = qubits.len();
        let sub = |idx: usize| qubits.iter().fold(0, |acc, &q| acc << 1 | bit(idx, n, q) as usize);
        let keep = |idx: usize| condition.is_none_or(|c| bit(idx, n, c.qubit) == c.value);
        let marginal = |probs: &[f64]| {
            let mut m = vec![0.0; 1 << k];
            let mut tot = 0.0;
            for (idx, p) in probs.iter().enumerate().filter(|(i, _)| keep(*i)) {
                m[sub(idx)] += p;
                tot += p;
            }
            m.iter().map(|x| if tot > 0.0 { x / tot } else { f64::NAN }).collect::<Vec<_>>()
        };
        let counts = self.counts(j, filter);
        let mut sampled = vec![0u64; 1 << k];
        let mut n_kept = 0u64;
        for (idx, c) in counts.iter().enumerate().filter(|(i, _)| keep(*i)) {
            sampled[sub(idx)] += c;
            n_kept += c;
        }
        let exact = marginal(&self.exact_distribution(j, filter, false));
        let corrected = marginal(&self.exact_distribution(j, filter, true));
        (0..1 << k)
            .map(|s| {
                let e = binomial_estimate(sampled[s], n_kept);
                CurvePoint {
                    x: s as f64,
                    estimate: e.value,
                    uncertainty: e.uncertainty,
                    exact: exact[s],
                    exact_corrected: corrected[s],
                }
            })
            .collect()
    }

    /// Parity of `(a, b)` at every scan point, optionally conditioned.
    pub fn parity_curve(
        &self,
        a: usize,
        b: usize,
        condition: Option<Condition>,
        filter: BranchFilter,
    ) -> Vec<CurvePoint> {
        (0..self.points.len())
            .map(|j| {
                let pops = self.populations(j, &[a, b], condition, filter);
                let even = |f: fn(&CurvePoint) -> f64| f(&pops[0]) + f(&pops[3]) - f(&pops[1]) - f(&pops[2]);
                let counts = self.counts(j, filter);
                let n = self.n_bits();
                let (mut n_even, mut n_tot) = (0u64, 0u64);
                for (idx, c) in counts.iter().enumerate() {
                    if condition.is_some_and(|cd| bit(idx, n, cd.qubit) != cd.value) {
                        continue;
                    }
                    n_tot += c;
                    if bit(idx, n, a) == bit(idx, n, b) {
                        n_even += c;
                    }
                }
                let e = parity_estimate(n_even, n_tot);
                CurvePoint {
                    x: self.points[j].scan_value,
                    estimate: e.value,
                    uncertainty: e.uncertainty,
                    exact: even(|p| p.exact),
                    exact_corrected: even(|p| p.exact_corrected),
                }
            })
            .collect()
    }

    pub fn wall_times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.wall_time_s).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonic::ideal_bell;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn certain_link_takes_one_attempt() {
        let b = LinkBudget {
            p_bell: 1.0,
            p_pi: 1.0,
            p_s_half: 1.0,
            q_e: 1.0,
            t_fib: 1.0,
            t_opt: 1.0,
            solid_angle_fraction: 1.0,
            rep_rate: 10.0,
        };
        let mut rng = trial_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_waiting(&b, &mut rng).unwrap(), (1, 0.1));
        }
        let dead = LinkBudget { q_e: 0.0, ..b };
        assert_eq!(sample_waiting(&dead, &mut rng), Err(NetsimError::ZeroSuccessProbability));
    }

    #[test]
    fn half_probability_mean_two() {
        let b = LinkBudget {
            p_bell: 0.5,
            p_pi: 1.0,
            p_s_half: 1.0,
            q_e: 1.0,
            t_fib: 1.0,
            t_opt: 1.0,
            solid_angle_fraction: 1.0,
            rep_rate: 1.0,
        };
        let mut rng = trial_rng(5, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_waiting(&b, &mut rng).unwrap().0 as f64).sum::<f64>() / n as f64;
        // Geometric(1/2): variance (1-p)/p^2 = 2.
        assert!((mean - 2.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn entanglement_distance() {
        assert!((coherent_entanglement_distance(1.0, 4.5, 1.12).unwrap() - 5.04).abs() < 1e-12);
        assert_eq!(coherent_entanglement_distance(2.0, 0.5, 1.0).unwrap(), 1.0);
        let d1 = coherent_entanglement_distance(1.0, 4.5, 1.12).unwrap();
        let d2 = coherent_entanglement_distance(1.0, 4.5, 2.24).unwrap();
        assert!((d2 - 2.0 * d1).abs() < 1e-12);
        assert!(coherent_entanglement_distance(0.0, 4.5, 1.12).is_err());
        assert!(coherent_entanglement_distance(1.0, -4.5, 1.12).is_err());
    }

    fn remote_script() -> ProtocolScript {
        ProtocolScript::new(&["a:A", "b:B"], &["herald a b", "wait scan", "measure"]).unwrap()
    }

    #[test]
    fn remote_pair_tracks_intermodule_phase() {
        let cfg = ProtocolConfig {
            gate_time_s: 0.0,
            ..ProtocolConfig::noiseless()
        };
        let t = 3e-5;
        let p = evolve_point(&remote_script(), &cfg, t).unwrap();
        assert_eq!(p.branches.len(), 4);
        for b in &p.branches {
            assert!((b.probability - 0.25).abs() < 1e-12);
            let phase = b.pair.unwrap().phi_d() + cfg.ledger.static_phase() + cfg.ledger.delta_omega_ab * t;
            let f = b.state.fidelity(&ideal_bell("a", "b", phase).unwrap()).unwrap();
            assert!((f - 1.0).abs() < 1e-10, "{f}");
        }
        assert_eq!(p.step_time_s, t);
    }

    #[test]
    fn identical_seeds_identical_records() {
        let cfg = ProtocolConfig::default();
        let s = remote_script();
        let scan = [0.0, 1e-4, 2e-4];
        let r1 = run_protocol(&s, &cfg, &scan, 500, 42).unwrap();
        let r2 = run_protocol(&s, &cfg, &scan, 500, 42).unwrap();
        assert_eq!(r1.records, r2.records);
        let r3 = run_protocol(&s, &cfg, &scan, 500, 43).unwrap();
        assert_ne!(r1.records, r3.records);
        for (i, r) in r1.records.iter().enumerate() {
            assert!(r.attempts_used >= 1);
            assert_eq!(r.scan_index, i / 500);
            let expect = r.attempts_used as f64 / cfg.budget.rep_rate + scan[r.scan_index];
            assert!((r.wall_time_s - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn detector_branches_out_of_phase() {
        let cfg = ProtocolConfig::noiseless();
        let s = ProtocolScript::new(&["a:A", "b:B"], &["herald a b", "wait scan", "rotate a,b pi/2 0", "measure"])
            .unwrap();
        let scan: Vec<f64> = (0..8).map(|i| i as f64 * 5e-5).collect();
        let r = run_protocol(&s, &cfg, &scan, 10, 1).unwrap();
        let zero = r.parity_curve(0, 1, None, BranchFilter::DetectorPhasePi(false));
        let pi = r.parity_curve(0, 1, None, BranchFilter::DetectorPhasePi(true));
        for (z, p) in zero.iter().zip(&pi) {
            assert!((z.exact + p.exact).abs() < 1e-10);
        }
        let fz = fit_cosine(
            &scan,
            &zero.iter().map(|c| c.exact).collect::<Vec<_>>(),
            None,
            cfg.ledger.delta_omega_ab,
        )
        .unwrap();
        let fp = fit_cosine(&scan, &pi.iter().map(|c| c.exact).collect::<Vec<_>>(), None, cfg.ledger.delta_omega_ab)
            .unwrap();
        assert!((crate::phase::wrap_phase(fp.phase - fz.phase).abs() - PI).abs() < 1e-9);
        assert!((fz.amplitude - 1.0).abs() < 1e-9);
    }

    #[test]
    fn local_gate_without_herald() {
        let s = ProtocolScript::new(&["q1:A", "q2:A"], &["ms q1 q2", "rotate q1,q2 pi/2 scan", "measure"]).unwrap();
        let cfg = ProtocolConfig {
            phi_a: 0.4,
            ..ProtocolConfig::noiseless()
        };
        let phis = [0.0, 0.3, FRAC_PI_2];
        let r = run_protocol(&s, &cfg, &phis, 100, 3).unwrap();
        assert!(r.rate.is_none());
        for (c, phi) in r.parity_curve(0, 1, None, BranchFilter::All).iter().zip(phis) {
            assert!((c.exact - (0.4 - 2.0 * phi).cos()).abs() < 1e-10);
        }
        assert!(r.records.iter().all(|t| t.herald.is_none() && t.attempts_used == 0));
    }
}
