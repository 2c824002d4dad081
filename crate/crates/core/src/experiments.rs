//! Experiment definitions behind the command-line subcommands. Each returns
//! its curves as tables and its headline numbers as a flat summary.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::Scenario;
use crate::gates::gate_timing;
use crate::netsim::{
    coherent_entanglement_distance, fit_cosine, fit_exponential_decay, fit_rate_times, ks_test_exponential,
    run_protocol, sample_waiting, trial_rng, binomial_estimate, BranchFilter, Condition, CurvePoint,
    Estimate, NetsimError, Param, ProtocolResult, ProtocolScript, Step,
};
use crate::phase::wrap_phase;
use crate::photonic::{expected_rate, ideal_bell, success_probability};
use crate::state::QuantumState;

/// First random stream used for standalone herald waiting-time samples;
/// protocol trials use streams below it.
pub const WAITING_STREAM_BASE: u64 = 1 << 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subcommand {
    RemoteBell,
    PhaseScan,
    Coherence,
    LocalGate,
    Modular3q,
    Budget,
    Timing,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Self::RemoteBell,
        Self::PhaseScan,
        Self::Coherence,
        Self::LocalGate,
        Self::Modular3q,
        Self::Budget,
        Self::Timing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::RemoteBell => "remote-bell",
            Self::PhaseScan => "phase-scan",
            Self::Coherence => "coherence",
            Self::LocalGate => "local-gate",
            Self::Modular3q => "modular-3q",
            Self::Budget => "budget",
            Self::Timing => "timing",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown subcommand `{s}`"))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    /// The scenario cannot drive the requested experiment.
    #[error("scenario does not fit `{subcommand}`: {message}")]
    Mismatch { subcommand: Subcommand, message: String },
    #[error(transparent)]
    Netsim(#[from] NetsimError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem of the emitted table.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(i64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    /// Flat key-value summary in emission order.
    pub summary: Vec<(String, Value)>,
}

impl ExperimentOutput {
    fn num(&mut self, key: &str, v: f64) {
        self.summary.push((key.to_string(), Value::Num(v)));
    }

    fn int(&mut self, key: &str, v: i64) {
        self.summary.push((key.to_string(), Value::Int(v)));
    }

    fn text(&mut self, key: &str, v: impl Into<String>) {
        self.summary.push((key.to_string(), Value::Text(v.into())));
    }

    fn estimate(&mut self, key: &str, e: Estimate) {
        self.num(key, e.value);
        self.num(&format!("{key}_err"), e.uncertainty);
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn get_num(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            Value::Num(v) => Some(*v),
            Value::Int(i) => Some(*i as f64),
            Value::Text(_) => None,
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

fn curve_table(name: &str, x_name: &str, curve: &[CurvePoint]) -> Table {
    Table {
        name: name.to_string(),
        columns: [x_name, "estimate", "uncertainty", "exact", "exact_corrected"].map(String::from).to_vec(),
        rows: curve
            .iter()
            .map(|c| {
                vec![
                    Cell::Num(c.x),
                    Cell::Num(c.estimate),
                    Cell::Num(c.uncertainty),
                    Cell::Num(c.exact),
                    Cell::Num(c.exact_corrected),
                ]
            })
            .collect(),
    }
}

fn state_label(i: usize, bits: usize) -> String {
    (0..bits).map(|k| if i >> (bits - 1 - k) & 1 == 1 { '1' } else { '0' }).collect()
}

fn population_table(name: &str, pops: &[CurvePoint]) -> Table {
    let bits = pops.len().trailing_zeros() as usize;
    let mut t = curve_table(name, "state", pops);
    t.columns[0] = "state".into();
    for (i, row) in t.rows.iter_mut().enumerate() {
        row[0] = Cell::Text(state_label(i, bits));
    }
    t
}

fn script(qubits: &[&str], steps: &[&str]) -> ProtocolScript {
    ProtocolScript::new(qubits, steps).expect("built-in script is valid")
}

fn mismatch(subcommand: Subcommand, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Mismatch {
        subcommand,
        message: message.into(),
    }
}

/// Runs one subcommand on a validated scenario.
pub fn run_experiment(sub: Subcommand, scenario: &Scenario) -> Result<ExperimentOutput, ExperimentError> {
    match sub {
        Subcommand::Budget => budget(scenario),
        Subcommand::Timing => timing(scenario),
        Subcommand::RemoteBell => remote_bell(scenario),
        Subcommand::PhaseScan => phase_scan(scenario),
        Subcommand::Coherence => coherence(scenario),
        Subcommand::LocalGate => local_gate(scenario),
        Subcommand::Modular3q => modular_3q(scenario),
    }
}

/// Herald waiting times drawn from the standalone streams.
pub fn sample_waiting_times(scenario: &Scenario) -> Result<Vec<f64>, NetsimError> {
    let seed = scenario.run.seed;
    (0..scenario.run.n_trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, WAITING_STREAM_BASE + i);
            sample_waiting(&scenario.link_budget, &mut rng).map(|(_, t)| t)
        })
        .collect()
}

fn rate_summary(out: &mut ExperimentOutput, prefix: &str, times: &[f64], budget_rate: f64) -> Option<f64> {
    let ks = ks_test_exponential(times, budget_rate);
    out.num(&format!("{prefix}ks_statistic"), ks.statistic);
    out.num(&format!("{prefix}ks_p_value"), ks.p_value);
    match fit_rate_times(times) {
        Ok(f) => {
            out.num(&format!("{prefix}rate_fit_hz"), f.rate);
            out.num(&format!("{prefix}rate_fit_hz_err"), f.std_err);
            out.int(&format!("{prefix}rate_fit_samples"), f.samples as i64);
            Some(f.rate)
        }
        Err(e) => {
            out.text(&format!("{prefix}rate_fit_status"), e.to_string());
            None
        }
    }
}

fn budget(s: &Scenario) -> Result<ExperimentOutput, ExperimentError> {
    let b = &s.link_budget;
    let p = success_probability(b);
    let r = expected_rate(b);
    let mut out = ExperimentOutput::default();
    let rows = [
        ("p_bell", b.p_bell),
        ("p_pi", b.p_pi),
        ("p_s_half", b.p_s_half),
        ("q_e", b.q_e),
        ("t_fib", b.t_fib),
        ("t_opt", b.t_opt),
        ("solid_angle_fraction", b.solid_angle_fraction),
        ("rep_rate_hz", b.rep_rate),
        ("single_photon_efficiency", b.single_photon_efficiency()),
        ("success_probability", p),
        ("expected_rate_hz", r),
    ];
    out.tables.push(Table {
        name: "budget".into(),
        columns: vec!["quantity".into(), "value".into()],
        rows: rows.iter().map(|(k, v)| vec![Cell::Text(k.to_string()), Cell::Num(*v)]).collect(),
    });
    out.num("success_probability", p);
    out.text("success_probability_2sf", format!("{p:.1e}"));
    out.num("expected_rate_hz", r);
    let times = sample_waiting_times(s)?;
    rate_summary(&mut out, "", &times, r);
    if r > 0.0 {
        out.num(
            "d_ent_m",
            coherent_entanglement_distance(s.run.qubit_separation_m, r, s.memory.tau_s)?,
        );
    }
    Ok(out)
}

fn timing(s: &Scenario) -> Result<ExperimentOutput, ExperimentError> {
    let t = gate_timing(s.gate.detuning_hz).map_err(NetsimError::from)?;
    let mut out = ExperimentOutput::default();
    out.tables.push(Table {
        name: "timing".into(),
        columns: ["detuning_hz", "sideband_rabi_hz", "gate_time_s", "phase_flip_time_s"]
            .map(String::from)
            .to_vec(),
        rows: vec![vec![
            Cell::Num(t.detuning_hz),
            Cell::Num(t.sideband_rabi_hz),
            Cell::Num(t.gate_time_s),
            Cell::Num(t.phase_flip_time_s),
        ]],
    });
    out.num("detuning_hz", t.detuning_hz);
    out.num("sideband_rabi_hz", t.sideband_rabi_hz);
    out.num("gate_time_s", t.gate_time_s);
    out.num("gate_time_us", t.gate_time_s * 1e6);
    out.num("phase_flip_time_s", t.phase_flip_time_s);
    Ok(out)
}

const REMOTE_PAIR: [&str; 2] = ["a:A", "b:B"];

fn remote_bell(s: &Scenario) -> Result<ExperimentOutput, ExperimentError> {
    let cfg = s.protocol_config();
    let res = run_protocol(
        &script(&REMOTE_PAIR, &["herald a b", "measure"]),
        &cfg,
        &[],
        s.run.shots_per_point,
        s.run.seed,
    )?;
    let pops = res.populations(0, &[0, 1], None, BranchFilter::All);
    let mut out = ExperimentOutput::default();
    out.tables.push(population_table("populations", &pops));
    let counts = res.counts(0, BranchFilter::All);
    let n: u64 = counts.iter().sum();
    out.estimate("odd_population", binomial_estimate(counts[1] + counts[2], n));
    out.num("odd_population_exact", pops[1].exact + pops[2].exact);
    out.num("odd_population_corrected", pops[1].exact_corrected + pops[2].exact_corrected);
    let mut fid = 0.0;
    for b in &res.points[0].branches {
        let pair = b.pair.expect("herald branch");
        let target = ideal_bell("a", "b", pair.phi_d() + cfg.ledger.static_phase()).map_err(NetsimError::from)?;
        fid += b.probability * b.state.fidelity(&target).map_err(NetsimError::from)?;
        out.num(&format!("branch_probability_{pair}"), b.probability);
    }
    out.num("heralded_fidelity", fid);
    out.num("expected_rate_hz", expected_rate(&cfg.budget));
    rate_summary(&mut out, "", &res.wall_times(), expected_rate(&cfg.budget));
    Ok(out)
}

fn phase_scan(s: &Scenario) -> Result<ExperimentOutput, ExperimentError> {
    let omega = s.phase_ledger.delta_omega_ab;
    if omega == 0.0 {
        return Err(mismatch(Subcommand::PhaseScan, "phase_ledger.delta_omega_ab is zero; nothing evolves"));
    }
    let cfg = s.protocol_config();
    let grid = s.run.wait_grid();
    let res = run_protocol(
        &script(&REMOTE_PAIR, &["herald a b", "wait scan", "rotate a,b pi/2 0", "measure"]),
        &cfg,
        &grid,
        s.run.shots_per_point,
        s.run.seed,
    )?;
    let mut out = ExperimentOutput::default();
    let mut phases = Vec::new();
    for (pi, tag) in [(false, "0"), (true, "pi")] {
        let curve = res.parity_curve(0, 1, None, BranchFilter::DetectorPhasePi(pi));
        let (x, est, sig, exact) = columns(&curve);
        let sampled = fit_cosine(&x, &est, Some(&sig), omega)?;
        let exact = fit_cosine(&x, &exact, None, omega)?;
        out.num(&format!("phase_phid_{tag}_rad"), exact.phase);
        out.num(&format!("amplitude_phid_{tag}"), exact.amplitude);
        out.num(&format!("phase_phid_{tag}_sampled_rad"), sampled.phase);
        out.num(&format!("phase_phid_{tag}_sampled_rad_err"), sampled.phase_err);
        out.num(&format!("amplitude_phid_{tag}_sampled"), sampled.amplitude);
        out.num(&format!("amplitude_phid_{tag}_sampled_err"), sampled.amplitude_err);
        out.tables.push(curve_table(&format!("parity_phid_{tag}"), "wait_s", &curve));
        phases.push((exact.phase, sampled.phase, sampled.phase_err));
    }
    out.num("phase_offset_rad", wrap_phase(phases[1].0 - phases[0].0).abs());
    out.num("phase_offset_sampled_rad", wrap_phase(phases[1].1 - phases[0].1).abs());
    out.num("phase_offset_sampled_rad_err", phases[0].2.hypot(phases[1].2));
    Ok(out)
}

fn columns(curve: &[CurvePoint]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    (
        curve.iter().map(|c| c.x).collect(),
        curve.iter().map(|c| c.estimate).collect(),
        curve.iter().map(|c| c.uncertainty).collect(),
        curve.iter().map(|c| c.exact).collect(),
    )
}

/// Spin-echo Ramsey sequence on a heralded pair, storage time scanned.
pub fn echo_script() -> ProtocolScript {
    script(
        &REMOTE_PAIR,
        &["herald a b", "wait 0.5*scan", "rotate a,b pi 0", "wait 0.5*scan", "rotate a,b pi/2 0", "measure"],
    )
}

/// Echo contrast of a remote pair: parity with the sign of the `phi_d = pi`
/// outcomes reversed, so both herald outcomes add up.
pub fn echo_contrast(res: &ProtocolResult) -> Vec<CurvePoint> {
    let zero = res.parity_curve(0, 1, None, BranchFilter::DetectorPhasePi(false));
    let pi = res.parity_curve(0, 1, None, BranchFilter::DetectorPhasePi(true));
    let weight = |j: usize, flag: bool| -> (f64, u64) {
        let exact = res.points[j]
            .branches
            .iter()
            .filter(|b| b.pair.is_some_and(|p| (p.phi_d() != 0.0) == flag))
            .map(|b| b.probability)
            .sum();
        let n = res.counts(j, BranchFilter::DetectorPhasePi(flag)).iter().sum();
        (exact, n)
    };
    let mut out: Vec<CurvePoint> = (0..zero.len())
        .map(|j| {
            let ((w0, n0), (w1, n1)) = (weight(j, false), weight(j, true));
            let (n0, n1) = (n0 as f64, n1 as f64);
            let (z, p) = (&zero[j], &pi[j]);
            let sampled = if n0 + n1 > 0.0 {
                let mix = |a: f64, b: f64| (n0 * a - n1 * b) / (n0 + n1);
                let m0 = if n0 > 0.0 { z.estimate } else { 0.0 };
                let m1 = if n1 > 0.0 { p.estimate } else { 0.0 };
                (mix(m0, m1), (n0 * z.uncertainty).hypot(n1 * p.uncertainty) / (n0 + n1))
            } else {
                (f64::NAN, f64::INFINITY)
            };
            CurvePoint {
                x: z.x,
                estimate: sampled.0,
                uncertainty: sampled.1,
                exact: (w0 * z.exact - w1 * p.exact) / (w0 + w1),
                exact_corrected: (w0 * z.exact_corrected - w1 * p.exact_corrected) / (w0 + w1),
            }
        })
        .collect();
    if out.first().is_some_and(|c| c.exact_corrected < 0.0) {
        for c in &mut out {
            c.estimate = -c.estimate;
            c.exact = -c.exact;
            c.exact_corrected = -c.exact_corrected;
        }
    }
    out
}

/// Waiting-time CDF on 26 points spanning five mean waiting times.
fn waiting_table(times: &[f64], rate: f64) -> Table {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as u64;
    let rows = (0..=25)
        .map(|k| {
            let t = k as f64 * 5.0 / rate / 25.0;
            let below = sorted.partition_point(|&x| x <= t) as u64;
            let e = binomial_estimate(below, n);
            let exact = 1.0 - (-rate * t).exp();
            vec![Cell::Num(t), Cell::Num(e.value), Cell::Num(e.uncertainty), Cell::Num(exact), Cell::Num(exact)]
        })
        .collect();
    Table {
        name: "waiting_cdf".into(),
        columns: ["time_s", "estimate", "uncertainty", "exact", "exact_corrected"].map(String::from).to_vec(),
        rows,
    }
}

fn coherence(s: &Scenario) -> Result<ExperimentOutput, ExperimentError> {
    if !s.memory.enabled {
        return Err(mismatch(Subcommand::Coherence, "memory decoherence is disabled (memory.enabled = false)"));
    }
    let cfg = s.protocol_config();
    let grid = s.run.coherence_grid();
    let res = run_protocol(&echo_script(), &cfg, &grid, s.run.shots_per_point, s.run.seed)?;
    let curve = echo_contrast(&res);
    let mut out = ExperimentOutput::default();
    out.tables.push(curve_table("coherence", "storage_s", &curve));
    let (x, est, sig, _) = columns(&curve);
    let corrected: Vec<f64> = curve.iter().map(|c| c.exact_corrected).collect();
    let exact = fit_exponential_decay(&x, &corrected, None)?;
    out.num("tau_fit_s", exact.tau);
    out.num("contrast_amplitude", exact.amplitude);
    let sampled = fit_exponential_decay(&x, &est, Some(&sig));
    match sampled {
        Ok(f) => {
            out.num("tau_fit_sampled_s", f.tau);
            out.num("tau_fit_sampled_s_err", f.tau_err);
        }
        Err(e) => out.text("tau_fit_sampled_status", e.to_string()),
    }
    let budget_rate = expected_rate(&cfg.budget);
    let times = sample_waiting_times(s)?;
    out.tables.push(waiting_table(&times, budget_rate));
    let rate = rate_summary(&mut out, "", &times, budget_rate);
    let d_q = s.run.qubit_separation_m;
    if let Some(r) = rate {
        out.num("d_ent_m", coherent_entanglement_distance(d_q, r, exact.tau)?);
    }
    out.num("d_ent_budget_m", coherent_entanglement_distance(d_q, budget_rate, s.memory.tau_s)?);
    Ok(out)
}

fn even_odd(res: &ProtocolResult, j: usize, pair: (usize, usize), cond: Option<Condition>) -> [(Estimate, f64, f64); 2] {
    let pops = res.populations(j, &[pair.0, pair.1], cond, BranchFilter::All);
    let n = res.counts(j, BranchFilter::All);
    let bits = res.labels.len();
    let bit = |idx: usize, k: usize| (idx >> (bits - 1 - k)) & 1;
    let (mut even, mut total) = (0u64, 0u64);
    for (idx, c) in n.iter().enumerate() {
        if cond.is_some_and(|cd| bit(idx, cd.qubit) as u8 != cd.value) {
            continue;
        }
        total += c;
        if bit(idx, pair.0) == bit(idx, pair.1) {
            even += c;
        }
    }
    let e = binomial_estimate(even, total);
    let o = binomial_estimate(total - even, total);
    [
        (e, pops[0].exact + pops[3].exact, pops[0].exact_corrected + pops[3].exact_corrected),
        (o, pops[1].exact + pops[2].exact, pops[1].exact_corrected + pops[2].exact_corrected),
    ]
}

/// Parity oscillation fits for a `cos(phi_a - 2 phi)` analysis scan.
struct ParityFit {
    sampled: crate::netsim::CosineFit,
    exact: crate::netsim::CosineFit,
    corrected: crate::netsim::CosineFit,
}

fn fit_parity(curve: &[CurvePoint]) -> Result<ParityFit, NetsimError> {
    let (x, est, sig, exact) = columns(curve);
    let corrected: Vec<f64> = curve.iter().map(|c| c.exact_corrected).collect();
    Ok(ParityFit {
        sampled: fit_cosine(&x, &est, Some(&sig), 2.0)?,
        exact: fit_cosine(&x, &exact, None, 2.0)?,
        corrected: fit_cosine(&x, &corrected, None, 2.0)?,
    })
}

fn local_gate(s: &Scenario) -> Result<ExperimentOutput, ExperimentError> {
    let cfg = s.protocol_config();
    let q = ["q1:A", "q2:A"];
    let pop = run_protocol(&script(&q, &["ms q1 q2", "measure"]), &cfg, &[], s.run.shots_per_point, s.run.seed)?;
    let scan = run_protocol(
        &script(&q, &["ms q1 q2", "rotate q1,q2 pi/2 scan", "measure"]),
        &cfg,
        &s.run.phase_grid(),
        s.run.shots_per_point,
        s.run.seed,
    )?;
    let mut out = ExperimentOutput::default();
    out.tables.push(population_table("populations", &pop.populations(0, &[0, 1], None, BranchFilter::All)));
    let curve = scan.parity_curve(0, 1, None, BranchFilter::All);
    out.tables.push(curve_table("parity", "phi_rad", &curve));
    let [(even, even_exact, even_corr), _] = even_odd(&pop, 0, (0, 1), None);
    out.estimate("even_population", even);
    out.num("even_population_exact", even_exact);
    out.num("even_population_corrected", even_corr);
    let f = fit_parity(&curve)?;
    out.num("parity_amplitude", f.sampled.amplitude);
    out.num("parity_amplitude_err", f.sampled.amplitude_err);
    out.num("parity_amplitude_exact", f.exact.amplitude);
    out.num("parity_amplitude_corrected", f.corrected.amplitude);
    out.num("parity_phase_rad", f.sampled.phase);
    out.num("parity_phase_rad_err", f.sampled.phase_err);
    out.num(
        "fidelity",
        even.value / 2.0 + f.sampled.amplitude / 2.0,
    );
    out.num("fidelity_err", even.uncertainty.hypot(f.sampled.amplitude_err) / 2.0);
    out.num("fidelity_exact", even_exact / 2.0 + f.exact.amplitude / 2.0);
    out.num("fidelity_corrected", even_corr / 2.0 + f.corrected.amplitude / 2.0);
    let ideal = QuantumState::basis(&["q1", "q2"], &[0, 0])
        .and_then(|z| z.apply_unitary(&crate::gates::ms_unitary(cfg.phi_a), &["q1", "q2"]))
        .map_err(NetsimError::from)?;
    out.num(
        "fidelity_state",
        pop.points[0].branches[0].state.fidelity(&ideal).map_err(NetsimError::from)?,
    );
    Ok(out)
}

/// Conditional analysis of a three-qubit run: parity of a pair correlated
/// with a third qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMetrics {
    /// Even-parity probability of the pair when the condition qubit reads 1.
    pub even_given_one: Metric,
    /// Odd-parity probability of the pair when the condition qubit reads 0.
    pub odd_given_zero: Metric,
    /// Fitted parity oscillation amplitude when the condition qubit reads 1.
    pub amplitude_given_one: Metric,
    /// Fidelity to the even entangled pair state when the condition qubit reads 1.
    pub fidelity_given_one: Metric,
    /// Parity curves conditioned on reading 1 and 0.
    pub parity_given_one: Vec<CurvePoint>,
    pub parity_given_zero: Vec<CurvePoint>,
    pub populations_given_one: Vec<CurvePoint>,
    pub populations_given_zero: Vec<CurvePoint>,
}

/// A statistic from sampled shots alongside its exact values with and
/// without detection error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub sampled: Estimate,
    pub exact: f64,
    pub corrected: f64,
}

/// The configured protocol split into its population run (scanned analysis
/// rotations removed) and its phase-scan run.
pub fn modular_scripts(s: &Scenario) -> Result<(ProtocolScript, ProtocolScript), ExperimentError> {
    let sub = Subcommand::Modular3q;
    let full = s.protocol.script()?;
    if full.herald_pair().is_none() {
        return Err(mismatch(sub, "protocol has no herald step"));
    }
    if s.protocol.condition().is_none() {
        return Err(mismatch(sub, "protocol.condition is empty"));
    }
    if !full.steps().iter().any(|st| matches!(st, Step::Rotate { phi: Param::Scan(_), .. })) {
        return Err(mismatch(sub, "protocol has no analysis rotation with a scanned phase"));
    }
    let steps: Vec<Step> = full
        .steps()
        .iter()
        .filter(|st| !matches!(st, Step::Rotate { phi: Param::Scan(_), .. }))
        .cloned()
        .collect();
    let pop = ProtocolScript::from_parts(full.qubits().to_vec(), steps)?;
    if pop.has_scan() {
        return Err(mismatch(sub, "only the analysis phase may be scanned"));
    }
    Ok((pop, full))
}

pub fn modular_metrics(
    s: &Scenario,
    pop: &ProtocolResult,
    scan: &ProtocolResult,
) -> Result<ConditionalMetrics, ExperimentError> {
    let idx = |q: &str| {
        pop.index_of(q)
            .ok_or_else(|| mismatch(Subcommand::Modular3q, format!("undeclared qubit `{q}`")))
    };
    let pair = (idx(&s.protocol.parity[0])?, idx(&s.protocol.parity[1])?);
    let c = idx(s.protocol.condition().unwrap_or_default())?;
    let one = Some(Condition { qubit: c, value: 1 });
    let zero = Some(Condition { qubit: c, value: 0 });
    let [(e1, e1x, e1c), _] = even_odd(pop, 0, pair, one);
    let [_, (o0, o0x, o0c)] = even_odd(pop, 0, pair, zero);
    let parity_given_one = scan.parity_curve(pair.0, pair.1, one, BranchFilter::All);
    let parity_given_zero = scan.parity_curve(pair.0, pair.1, zero, BranchFilter::All);
    let f = fit_parity(&parity_given_one)?;
    Ok(ConditionalMetrics {
        even_given_one: Metric { sampled: e1, exact: e1x, corrected: e1c },
        odd_given_zero: Metric { sampled: o0, exact: o0x, corrected: o0c },
        amplitude_given_one: Metric {
            sampled: Estimate { value: f.sampled.amplitude, uncertainty: f.sampled.amplitude_err },
            exact: f.exact.amplitude,
            corrected: f.corrected.amplitude,
        },
        fidelity_given_one: Metric {
            sampled: Estimate {
                value: (e1.value + f.sampled.amplitude) / 2.0,
                uncertainty: e1.uncertainty.hypot(f.sampled.amplitude_err) / 2.0,
            },
            exact: (e1x + f.exact.amplitude) / 2.0,
            corrected: (e1c + f.corrected.amplitude) / 2.0,
        },
        parity_given_one,
        parity_given_zero,
        populations_given_one: pop.populations(0, &[pair.0, pair.1], one, BranchFilter::All),
        populations_given_zero: pop.populations(0, &[pair.0, pair.1], zero, BranchFilter::All),
    })
}

/// Exact conditional metrics only (no shots), for calibration.
pub fn modular_metrics_exact(s: &Scenario) -> Result<ConditionalMetrics, ExperimentError> {
    let (pop_script, scan_script) = modular_scripts(s)?;
    let cfg = s.protocol_config();
    let pop = run_protocol(&pop_script, &cfg, &[], 0, s.run.seed)?;
    let scan = run_protocol(&scan_script, &cfg, &s.run.phase_grid(), 0, s.run.seed)?;
    modular_metrics(s, &pop, &scan)
}

fn modular_3q(s: &Scenario) -> Result<ExperimentOutput, ExperimentError> {
    let (pop_script, scan_script) = modular_scripts(s)?;
    let cfg = s.protocol_config();
    let pop = run_protocol(&pop_script, &cfg, &[], s.run.shots_per_point, s.run.seed)?;
    let scan = run_protocol(&scan_script, &cfg, &s.run.phase_grid(), s.run.shots_per_point, s.run.seed)?;
    let m = modular_metrics(s, &pop, &scan)?;
    let mut out = ExperimentOutput::default();
    out.tables.push(population_table("populations_remote1", &m.populations_given_one));
    out.tables.push(population_table("populations_remote0", &m.populations_given_zero));
    out.tables.push(curve_table("parity_remote1", "phi_rad", &m.parity_given_one));
    out.tables.push(curve_table("parity_remote0", "phi_rad", &m.parity_given_zero));
    for (key, metric) in [
        ("even_given_remote1", m.even_given_one),
        ("odd_given_remote0", m.odd_given_zero),
        ("parity_amplitude_remote1", m.amplitude_given_one),
        ("fidelity_remote1", m.fidelity_given_one),
    ] {
        out.estimate(key, metric.sampled);
        out.num(&format!("{key}_exact"), metric.exact);
        out.num(&format!("{key}_corrected"), metric.corrected);
    }
    let worst = m
        .parity_given_zero
        .iter()
        .map(|c| c.estimate.abs() / c.uncertainty)
        .fold(0.0, f64::max);
    out.num("max_abs_parity_over_sigma_remote0", worst);
    let mean = m.parity_given_zero.iter().map(|c| c.estimate).sum::<f64>() / m.parity_given_zero.len() as f64;
    out.num("mean_parity_remote0", mean);
    out.num("expected_rate_hz", expected_rate(&cfg.budget));
    rate_summary(&mut out, "", &scan.wall_times(), expected_rate(&cfg.budget));
    Ok(out)
}
