//! Remote entanglement through photons: atom excitation and emission,
//! quarter-wave-plate mapping, two-photon Bell-state measurement on a 50/50
//! beam-splitter, and the analytic success-probability budget.
//!
//! Basis conventions used throughout this module:
//! * atom Zeeman qubit: index 0 is `|F=1, m=+1>`, index 1 is `|F=1, m=-1>`;
//! * photon polarization is stored in the lab linear basis, index 0 = H,
//!   index 1 = V, with `sigma+ = (H + iV)/sqrt2` and `sigma- = (H - iV)/sqrt2`.
//!
//! After heralding, the Zeeman states are relabeled onto the clock qubit
//! (`m=+1 -> |0>`, `m=-1 -> |1>`).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{ops, QuantumState, StateError, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("{field} = {value} outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("rep_rate must be positive, got {0}")]
    BadRepRate(f64),
    #[error("expected a two-subsystem {0} register")]
    MalformedRegister(&'static str),
    #[error(transparent)]
    State(#[from] StateError),
}

fn unit_interval(field: &'static str, value: f64) -> Result<(), LinkError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(LinkError::OutOfRange { field, value })
    }
}

/// Multiplicative factors of the coincidence-detection probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkBudget {
    /// Fraction of two-photon Bell states the analyzer can identify.
    pub p_bell: f64,
    /// Probability the excitation pulse drives S1/2 -> P1/2.
    pub p_pi: f64,
    /// Branching ratio of P1/2 back to S1/2.
    pub p_s_half: f64,
    pub q_e: f64,
    pub t_fib: f64,
    pub t_opt: f64,
    /// Collected solid-angle fraction `Omega / 4 pi`.
    pub solid_angle_fraction: f64,
    /// Excitation attempts per second.
    pub rep_rate: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            p_bell: 0.5,
            p_pi: 0.95,
            p_s_half: 0.995,
            q_e: 0.35,
            t_fib: 0.14,
            t_opt: 0.95,
            solid_angle_fraction: 0.1,
            rep_rate: 4.7e5,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<(), LinkError> {
        unit_interval("p_bell", self.p_bell)?;
        unit_interval("p_pi", self.p_pi)?;
        unit_interval("p_s_half", self.p_s_half)?;
        unit_interval("q_e", self.q_e)?;
        unit_interval("t_fib", self.t_fib)?;
        unit_interval("t_opt", self.t_opt)?;
        unit_interval("solid_angle_fraction", self.solid_angle_fraction)?;
        if !(self.rep_rate > 0.0 && self.rep_rate.is_finite()) {
            return Err(LinkError::BadRepRate(self.rep_rate));
        }
        Ok(())
    }

    /// Probability that a single photon from one atom is emitted, collected
    /// and detected.
    pub fn single_photon_efficiency(&self) -> f64 {
        self.p_pi * self.p_s_half * self.q_e * self.t_fib * self.t_opt * self.solid_angle_fraction
    }
}

/// Probability of a heralding coincidence per simultaneous excitation of
/// both atoms.
pub fn success_probability(b: &LinkBudget) -> f64 {
    b.p_bell * b.single_photon_efficiency().powi(2)
}

/// Heralded entanglement events per second.
pub fn expected_rate(b: &LinkBudget) -> f64 {
    success_probability(b) * b.rep_rate
}

/// Mode overlap that brings the heralded Bell-state fidelity to 0.79 when
/// each atom-photon pair has fidelity 0.92. Regenerate with
/// `cargo run -p ionnet --example calibrate`.
pub const CALIBRATED_MODE_OVERLAP: f64 = 0.923_746_765_316_937;

/// Imperfections of the photonic link. Dark counts are not modeled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkErrorModel {
    /// Fidelity of each emitted atom-photon state to the ideal entangled state.
    pub atom_photon_fidelity: f64,
    /// Amplitude overlap `v` of the two photon wave packets at the beam-splitter.
    pub mode_overlap: f64,
}

impl Default for LinkErrorModel {
    fn default() -> Self {
        Self {
            atom_photon_fidelity: 0.92,
            mode_overlap: CALIBRATED_MODE_OVERLAP,
        }
    }
}

impl LinkErrorModel {
    pub fn ideal() -> Self {
        Self {
            atom_photon_fidelity: 1.0,
            mode_overlap: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        unit_interval("atom_photon_fidelity", self.atom_photon_fidelity)?;
        unit_interval("mode_overlap", self.mode_overlap)
    }
}

/// Detector coincidences that herald entanglement. PMTs 1 and 2 watch the
/// two polarizations of one beam-splitter output port, PMTs 3 and 4 the
/// other port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorPair {
    P12,
    P34,
    P13,
    P24,
}

impl DetectorPair {
    pub const ALL: [DetectorPair; 4] = [Self::P12, Self::P34, Self::P13, Self::P24];

    pub fn detectors(self) -> (u8, u8) {
        match self {
            Self::P12 => (1, 2),
            Self::P34 => (3, 4),
            Self::P13 => (1, 3),
            Self::P24 => (2, 4),
        }
    }

    pub fn from_detectors(a: u8, b: u8) -> Option<Self> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        Self::ALL.into_iter().find(|p| p.detectors() == (lo, hi))
    }

    /// 0 for same-port coincidences, pi for cross-port ones.
    pub fn phi_d(self) -> f64 {
        match self {
            Self::P12 | Self::P34 => 0.0,
            Self::P13 | Self::P24 => PI,
        }
    }

    /// Bra on the photon pair (index order HH, HV, VH, VV) giving the
    /// interfering-photon amplitude for this coincidence.
    fn interfering_bra(self) -> [f64; 4] {
        match self {
            Self::P12 => [0.0, 0.5, 0.5, 0.0],
            Self::P34 => [0.0, -0.5, -0.5, 0.0],
            Self::P13 => [0.0, -0.5, 0.5, 0.0],
            Self::P24 => [0.0, 0.5, -0.5, 0.0],
        }
    }
}

impl std::fmt::Display for DetectorPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (a, b) = self.detectors();
        write!(f, "{a}{b}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldEvent {
    pub detector_pair: DetectorPair,
    pub phi_d: f64,
    pub attempt_index: u64,
    /// Seconds since the protocol started.
    pub time: f64,
}

impl HeraldEvent {
    pub fn new(detector_pair: DetectorPair, attempt_index: u64, rep_rate: f64) -> Self {
        Self {
            detector_pair,
            phi_d: detector_pair.phi_d(),
            attempt_index,
            time: attempt_index as f64 / rep_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsmOutcome {
    Herald(DetectorPair),
    NoHerald,
}

/// Exact outcome distribution of the Bell-state analyzer, given that both
/// photons reached it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsmDistribution {
    /// Probabilities in [`DetectorPair::ALL`] order.
    pub pairs: [f64; 4],
    pub no_herald: f64,
}

impl BsmDistribution {
    pub fn herald_probability(&self) -> f64 {
        self.pairs.iter().sum()
    }

    pub fn probability(&self, pair: DetectorPair) -> f64 {
        self.pairs[DetectorPair::ALL.iter().position(|p| *p == pair).unwrap()]
    }
}

fn real_ket(v: [f64; 4]) -> DVector<C64> {
    DVector::from_iterator(4, v.into_iter().map(|x| C64::new(x, 0.0)))
}

const HV: [f64; 4] = [0.0, 1.0, 0.0, 0.0];
const VH: [f64; 4] = [0.0, 0.0, 1.0, 0.0];

/// `<phi| rho |phi>` on the photon pair for the coincidence `pair`, mixing the
/// interfering part (weight v^2) with the distinguishable part, for which the
/// photons take classical paths and only product polarizations are projected.
fn pair_operator(
    state: &QuantumState,
    photons: &[&str; 2],
    pair: DetectorPair,
    overlap: f64,
) -> Result<(Vec<String>, DMatrix<C64>), LinkError> {
    let v2 = overlap * overlap;
    let (labels, interfering) = state.contract(photons, &real_ket(pair.interfering_bra()))?;
    let mut out = interfering * C64::new(v2, 0.0);
    if v2 < 1.0 {
        let (_, hv) = state.contract(photons, &real_ket(HV))?;
        let (_, vh) = state.contract(photons, &real_ket(VH))?;
        out += (hv + vh) * C64::new(0.25 * (1.0 - v2), 0.0);
    }
    Ok((labels, out))
}

/// Exact Bell-state-analyzer statistics for a two-photon polarization state.
pub fn bsm_distribution(photons: &QuantumState, overlap: f64) -> Result<BsmDistribution, LinkError> {
    if photons.num_subsystems() != 2 {
        return Err(LinkError::MalformedRegister("photon"));
    }
    unit_interval("mode_overlap", overlap)?;
    let labels = photons.labels();
    let pl = [labels[0].as_str(), labels[1].as_str()];
    let mut pairs = [0.0; 4];
    for (i, pair) in DetectorPair::ALL.into_iter().enumerate() {
        let (_, m) = pair_operator(photons, &pl, pair, overlap)?;
        pairs[i] = m.trace().re.max(0.0);
    }
    let total: f64 = pairs.iter().sum();
    Ok(BsmDistribution {
        pairs,
        no_herald: (1.0 - total).max(0.0),
    })
}

fn sample_pair<R: Rng + ?Sized>(probs: &[f64; 4], rng: &mut R) -> BsmOutcome {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (p, pair) in probs.iter().zip(DetectorPair::ALL) {
        acc += p;
        if u < acc {
            return BsmOutcome::Herald(pair);
        }
    }
    BsmOutcome::NoHerald
}

/// Samples one Bell-state-analyzer outcome.
pub fn bsm<R: Rng + ?Sized>(
    photons: &QuantumState,
    overlap: f64,
    rng: &mut R,
) -> Result<BsmOutcome, LinkError> {
    let dist = bsm_distribution(photons, overlap)?;
    Ok(sample_pair(&dist.pairs, rng))
}

fn ideal_emission_ket() -> Vec<C64> {
    // (|+1>|sigma-> - |-1>|sigma+>)/sqrt2 written in the (H, V) basis.
    let h = 0.5;
    vec![
        C64::new(h, 0.0),
        C64::new(0.0, -h),
        C64::new(-h, 0.0),
        C64::new(0.0, -h),
    ]
}

/// Ideal atom-photon state emitted after resonant excitation.
pub fn ideal_emission(atom: &str, photon: &str) -> Result<QuantumState, LinkError> {
    Ok(QuantumState::from_amplitudes(&[atom, photon], ideal_emission_ket())?)
}

/// Emitted atom-photon state with the configured fidelity to the ideal one.
/// The error is an isotropic admixture `F |psi><psi| + (1-F)/3 (I - |psi><psi|)`.
pub fn emit_atom_photon(
    error: &LinkErrorModel,
    atom: &str,
    photon: &str,
) -> Result<QuantumState, LinkError> {
    error.validate()?;
    let ideal = ideal_emission(atom, photon)?;
    let f = error.atom_photon_fidelity;
    if f == 1.0 {
        return Ok(ideal);
    }
    let proj = ideal.density_matrix();
    let id = DMatrix::<C64>::identity(4, 4);
    let rho = &proj * C64::new(f, 0.0) + (id - &proj) * C64::new((1.0 - f) / 3.0, 0.0);
    Ok(QuantumState::from_density(&[atom, photon], rho)?)
}

/// Quarter-wave plate taking `sigma+ -> i H` and `sigma- -> V`.
pub fn qwp_unitary() -> DMatrix<C64> {
    let s = FRAC_1_SQRT_2;
    DMatrix::from_row_slice(
        2,
        2,
        &[C64::new(0.0, s), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(0.0, s)],
    )
}

pub fn qwp_map(state: &QuantumState, photon: &str) -> Result<QuantumState, LinkError> {
    Ok(state.apply_unitary(&qwp_unitary(), &[photon])?)
}

pub fn qwp_inverse(state: &QuantumState, photon: &str) -> Result<QuantumState, LinkError> {
    Ok(state.apply_unitary(&qwp_unitary().adjoint(), &[photon])?)
}

/// Emission followed by the wave plate: the state that enters the fiber.
pub fn prepare_flying_qubit(
    error: &LinkErrorModel,
    atom: &str,
    photon: &str,
) -> Result<QuantumState, LinkError> {
    qwp_map(&emit_atom_photon(error, atom, photon)?, photon)
}

/// One possible herald together with the resulting two-atom state.
#[derive(Debug, Clone)]
pub struct HeraldBranch {
    pub pair: DetectorPair,
    /// Probability of this coincidence given both photons reach the analyzer.
    pub probability: f64,
    /// Two-atom clock-basis state, module A atom first.
    pub state: QuantumState,
}

fn split_atom_photon(s: &QuantumState) -> Result<(String, String), LinkError> {
    if s.num_subsystems() != 2 {
        return Err(LinkError::MalformedRegister("atom-photon"));
    }
    Ok((s.labels()[0].clone(), s.labels()[1].clone()))
}

/// All heralding outcomes of interfering the photons of two atom-photon
/// states (atom label first, photon label second in each).
///
/// On a herald the photons are projected and discarded, and the microwave
/// transfer pulses relabel the Zeeman states onto the clock basis with a
/// relative phase `transfer_phase` applied to the module A atom.
pub fn herald_branches(
    a: &QuantumState,
    b: &QuantumState,
    overlap: f64,
    transfer_phase: f64,
) -> Result<Vec<HeraldBranch>, LinkError> {
    unit_interval("mode_overlap", overlap)?;
    let (atom_a, photon_a) = split_atom_photon(a)?;
    let (atom_b, photon_b) = split_atom_photon(b)?;
    let joint = a.tensor(b)?;
    let photons = [photon_a.as_str(), photon_b.as_str()];
    let mut out = Vec::with_capacity(4);
    for pair in DetectorPair::ALL {
        let (labels, m) = pair_operator(&joint, &photons, pair, overlap)?;
        let p = m.trace().re;
        if p <= 1e-15 {
            continue;
        }
        let atoms = QuantumState::from_unnormalized(labels, m, a.cap().min(b.cap()))?
            .permute(&[atom_a.as_str(), atom_b.as_str()])?;
        let state = if transfer_phase == 0.0 {
            atoms
        } else {
            atoms.apply_unitary(&ops::phase(transfer_phase), &[atom_a.as_str()])?
        };
        out.push(HeraldBranch {
            pair,
            probability: p,
            state,
        });
    }
    Ok(out)
}

/// Samples one entanglement attempt given that both photons were collected.
/// Returns `None` when the analyzer does not register a valid coincidence.
pub fn herald_remote_pair<R: Rng + ?Sized>(
    a: &QuantumState,
    b: &QuantumState,
    error: &LinkErrorModel,
    transfer_phase: f64,
    attempt_index: u64,
    rep_rate: f64,
    rng: &mut R,
) -> Result<Option<(HeraldEvent, QuantumState)>, LinkError> {
    let branches = herald_branches(a, b, error.mode_overlap, transfer_phase)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for br in branches {
        acc += br.probability;
        if u < acc {
            return Ok(Some((
                HeraldEvent::new(br.pair, attempt_index, rep_rate),
                br.state,
            )));
        }
    }
    Ok(None)
}

/// Ideal heralded clock-basis state `(|01> + e^{i phase}|10>)/sqrt2`.
pub fn ideal_bell(a: &str, b: &str, phase: f64) -> Result<QuantumState, StateError> {
    let z = C64::new(0.0, 0.0);
    QuantumState::from_ket(&[a, b], vec![z, C64::new(1.0, 0.0), C64::from_polar(1.0, phase), z])
}

/// Herald-averaged fidelity of the remote pair to the ideal Bell state of
/// each branch.
pub fn heralded_fidelity(error: &LinkErrorModel) -> Result<f64, LinkError> {
    let a = prepare_flying_qubit(error, "a", "pa")?;
    let b = prepare_flying_qubit(error, "b", "pb")?;
    let branches = herald_branches(&a, &b, error.mode_overlap, 0.0)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for br in &branches {
        num += br.probability * br.state.fidelity(&ideal_bell("a", "b", br.pair.phi_d())?)?;
        den += br.probability;
    }
    Ok(num / den)
}
