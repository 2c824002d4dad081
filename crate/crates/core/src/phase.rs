//! Intermodule phase bookkeeping and memory dephasing of remote pairs.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{QuantumState, StateError};

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Bound on each geometric phase term below which the terms count as stable.
pub const GEOMETRIC_PHASE_BOUND: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("negative evolution time {0}")]
    NegativeTime(f64),
    #[error("coherence time must be positive, got {0}")]
    BadCoherenceTime(f64),
    #[error("geometric phase term {name} = {value:.3e} exceeds {GEOMETRIC_PHASE_BOUND:e}")]
    GeometricPhaseTooLarge { name: &'static str, value: f64 },
    #[error(transparent)]
    State(#[from] StateError),
}

/// Terms of the heralded pair's intermodule phase
/// `phi_d + delta_omega_ab t + k c delta_tau + k delta_x + delta_phi_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseLedger {
    /// Detector phase of the herald; set per event, not configured.
    #[serde(skip)]
    pub phi_d: f64,
    /// Qubit splitting difference between the modules, rad/s.
    pub delta_omega_ab: f64,
    /// Wavenumber of the sigma+/sigma- photon energy difference, 1/m.
    pub k: f64,
    /// Excitation time difference, s.
    pub delta_tau: f64,
    /// Path length difference to the beam-splitter, m.
    pub delta_x: f64,
    /// Phase difference of the microwave transfer pulses, rad.
    pub delta_phi_t: f64,
    /// Accept geometric terms above the stability bound (reported as a warning).
    pub allow_large_geometric_phase: bool,
}

impl Default for PhaseLedger {
    fn default() -> Self {
        Self {
            phi_d: 0.0,
            delta_omega_ab: 2.0 * PI * 2.5e3,
            k: 0.33,
            delta_tau: 1e-10,
            delta_x: 0.03,
            delta_phi_t: 0.0,
            allow_large_geometric_phase: false,
        }
    }
}

impl PhaseLedger {
    pub fn with_detector_phase(self, phi_d: f64) -> Self {
        Self { phi_d, ..self }
    }

    pub fn timing_term(&self) -> f64 {
        self.k * SPEED_OF_LIGHT * self.delta_tau
    }

    pub fn path_term(&self) -> f64 {
        self.k * self.delta_x
    }

    /// Time-independent part without the detector phase: the phase the
    /// transfer pulses imprint on a freshly heralded pair.
    pub fn static_phase(&self) -> f64 {
        self.timing_term() + self.path_term() + self.delta_phi_t
    }

    /// Checks the geometric-term bounds. Returns the list of violations that
    /// were let through because `allow_large_geometric_phase` is set.
    pub fn validate(&self) -> Result<Vec<PhaseError>, PhaseError> {
        let mut warnings = Vec::new();
        for (name, value) in [("k*c*delta_tau", self.timing_term()), ("k*delta_x", self.path_term())] {
            if value.abs() >= GEOMETRIC_PHASE_BOUND {
                let e = PhaseError::GeometricPhaseTooLarge { name, value };
                if self.allow_large_geometric_phase {
                    warnings.push(e);
                } else {
                    return Err(e);
                }
            }
        }
        Ok(warnings)
    }
}

/// Reduces an angle to `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Intermodule phase at time `t` after the herald, reduced to `(-pi, pi]`.
pub fn phi_ab(ledger: &PhaseLedger, t: f64) -> f64 {
    wrap_phase(ledger.phi_d + ledger.delta_omega_ab * t + ledger.static_phase())
}

/// Dephasing of stored remote entanglement.
///
/// Modeled as Gaussian phase diffusion with a differential component (acting
/// on the `|01>/|10>` coherence) and a common component (acting on
/// `|00>/|11>`). Each coherence decays as `exp(-t/tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryDecoherence {
    pub enabled: bool,
    /// Coherence time of the odd-parity pair coherence, s.
    pub tau_s: f64,
    /// Override for the even-parity coherence; `tau_s` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub even_tau_s: Option<f64>,
}

impl Default for MemoryDecoherence {
    fn default() -> Self {
        Self {
            enabled: true,
            tau_s: 1.12,
            even_tau_s: None,
        }
    }
}

impl MemoryDecoherence {
    pub fn with_tau(tau_s: f64) -> Self {
        Self {
            tau_s,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PhaseError> {
        for tau in std::iter::once(self.tau_s).chain(self.even_tau_s) {
            if !(tau > 0.0) {
                return Err(PhaseError::BadCoherenceTime(tau));
            }
        }
        Ok(())
    }

    pub fn even_tau(&self) -> f64 {
        self.even_tau_s.unwrap_or(self.tau_s)
    }

    /// Decay factor of a density-matrix element whose bit changes on the
    /// pair are `(da, db)`.
    fn factor(&self, da: i32, db: i32, t: f64) -> f64 {
        let diff = f64::from(da - db);
        let common = f64::from(da + db);
        (-t * (diff * diff / (4.0 * self.tau_s) + common * common / (4.0 * self.even_tau()))).exp()
    }
}

/// Free evolution of a pair for time `t`: relative phase accumulation at
/// `rate` rad/s (the second qubit of the pair picks up `e^{-i rate t}` on
/// `|1>`) and, optionally, memory dephasing.
pub(crate) fn apply_pair_evolution(
    s: &QuantumState,
    pair: (&str, &str),
    rate: f64,
    decoherence: Option<&MemoryDecoherence>,
    t: f64,
) -> Result<QuantumState, StateError> {
    let pa = s.index_of(pair.0)?;
    let pb = s.index_of(pair.1)?;
    if pa == pb {
        return Err(StateError::DuplicateLabel(pair.0.to_string()));
    }
    let mut out = if rate * t != 0.0 {
        let ph = Complex64::from_polar(1.0, -rate * t);
        let one = Complex64::new(1.0, 0.0);
        let phases: Vec<Complex64> = (0..s.dim())
            .map(|i| if s.bit_of(i, pb) == 1 { ph } else { one })
            .collect();
        s.apply_diagonal(&phases)
    } else {
        s.clone()
    };
    if let Some(d) = decoherence.filter(|d| d.enabled && t > 0.0) {
        let bits = |i: usize| (out.bit_of(i, pa) as i32, out.bit_of(i, pb) as i32);
        out = out.scale_coherences(|r, c| {
            let (ar, br) = bits(r);
            let (ac, bc) = bits(c);
            d.factor(ar - ac, br - bc, t)
        });
    }
    Ok(out)
}

/// Evolves a stored remote pair (module A qubit first) for `t` seconds:
/// the intermodule phase advances by `delta_omega_ab t` and coherences decay.
pub fn evolve_entangled_state(
    s: &QuantumState,
    pair: (&str, &str),
    ledger: &PhaseLedger,
    decoherence: Option<&MemoryDecoherence>,
    t: f64,
) -> Result<QuantumState, PhaseError> {
    if t < 0.0 || t.is_nan() {
        return Err(PhaseError::NegativeTime(t));
    }
    if let Some(d) = decoherence {
        d.validate()?;
    }
    Ok(apply_pair_evolution(s, pair, ledger.delta_omega_ab, decoherence, t)?)
}
