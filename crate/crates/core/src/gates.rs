//! Local operations inside a module: the phonon-bus entangling gate,
//! single-qubit rotations, the spin-echo Ramsey sequence, and Walsh-modulated
//! gate timing.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phase::{apply_pair_evolution, MemoryDecoherence};
use crate::state::{QuantumState, StateError, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("gate needs two distinct qubits, got {0:?} twice")]
    SameQubit(String),
    #[error("detuning must be positive, got {0}")]
    BadDetuning(f64),
    #[error("negative delay {0}")]
    NegativeDelay(f64),
    #[error("depolarizing probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Two-qubit depolarizing probability applied after each entangling gate.
/// With this value the gate maps `|00>` to a state of fidelity 0.85.
pub const CALIBRATED_GATE_DEPOLARIZING: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateNoise {
    pub depolarizing_p: f64,
}

impl Default for GateNoise {
    fn default() -> Self {
        Self {
            depolarizing_p: CALIBRATED_GATE_DEPOLARIZING,
        }
    }
}

impl GateNoise {
    pub fn noiseless() -> Self {
        Self { depolarizing_p: 0.0 }
    }

    pub fn validate(&self) -> Result<(), GateError> {
        if (0.0..=1.0).contains(&self.depolarizing_p) {
            Ok(())
        } else {
            Err(GateError::BadProbability(self.depolarizing_p))
        }
    }
}

/// Detuning of the entangling-gate sidebands from the motional mode, Hz.
pub const DEFAULT_DETUNING_HZ: f64 = 20e3;

/// Walsh W\[1\] schedule of the entangling gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateTiming {
    /// Detuning from the motional mode, cyclic frequency in Hz.
    pub detuning_hz: f64,
    /// Sideband Rabi frequency (Lamb-Dicke factor times carrier Rabi), Hz.
    pub sideband_rabi_hz: f64,
    pub gate_time_s: f64,
    /// Instant of the pi phase advance of the sidebands.
    pub phase_flip_time_s: f64,
}

pub fn gate_timing(detuning_hz: f64) -> Result<GateTiming, GateError> {
    if !(detuning_hz > 0.0 && detuning_hz.is_finite()) {
        return Err(GateError::BadDetuning(detuning_hz));
    }
    let gate_time_s = 2.0 / detuning_hz;
    Ok(GateTiming {
        detuning_hz,
        sideband_rabi_hz: detuning_hz / (2.0 * SQRT_2),
        gate_time_s,
        phase_flip_time_s: gate_time_s / 2.0,
    })
}

/// Noiseless entangling-gate unitary in the basis `|00>, |01>, |10>, |11>`:
///
/// ```text
/// |00> -> (|00> - i e^{-i phi_a} |11>)/sqrt2
/// |11> -> (|11> - i e^{+i phi_a} |00>)/sqrt2
/// |01> -> (|01> - i |10>)/sqrt2
/// |10> -> (|10> - i |01>)/sqrt2
/// ```
pub fn ms_unitary(phi_a: f64) -> DMatrix<C64> {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    let mi = C64::new(0.0, -FRAC_1_SQRT_2);
    let z = C64::new(0.0, 0.0);
    let lower = mi * C64::from_polar(1.0, -phi_a);
    let upper = mi * C64::from_polar(1.0, phi_a);
    DMatrix::from_row_slice(
        4,
        4,
        &[
            s, z, z, upper, //
            z, s, mi, z, //
            z, mi, s, z, //
            lower, z, z, s,
        ],
    )
}

/// Entangling gate on `pair` followed by two-qubit depolarizing noise.
pub fn ms_gate(
    s: &QuantumState,
    pair: (&str, &str),
    phi_a: f64,
    noise: &GateNoise,
) -> Result<QuantumState, GateError> {
    if pair.0 == pair.1 {
        return Err(GateError::SameQubit(pair.0.to_string()));
    }
    noise.validate()?;
    let out = s.apply_unitary(&ms_unitary(phi_a), &[pair.0, pair.1])?;
    Ok(out.depolarize(&[pair.0, pair.1], noise.depolarizing_p)?)
}

/// Single-qubit rotation by `theta` about an equatorial axis set by the
/// drive phase `phi`.
///
/// The phase origin is fixed so that analysis pulses of phase `phi` on the
/// entangling-gate output `|00> - i e^{-i phi_a}|11>` produce the parity
/// `cos(phi_a - 2 phi)`: the rotation axis sits at angle `pi/4 - phi` from X.
pub fn rotation_matrix(theta: f64, phi: f64) -> DMatrix<C64> {
    let axis = FRAC_PI_4 - phi;
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(c, 0.0),
            C64::new(0.0, -s) * C64::from_polar(1.0, -axis),
            C64::new(0.0, -s) * C64::from_polar(1.0, axis),
            C64::new(c, 0.0),
        ],
    )
}

pub fn rotation(s: &QuantumState, target: &str, theta: f64, phi: f64) -> Result<QuantumState, GateError> {
    Ok(s.apply_unitary(&rotation_matrix(theta, phi), &[target])?)
}

/// Same rotation applied to each of `targets`.
pub fn rotate_all(
    s: &QuantumState,
    targets: &[&str],
    theta: f64,
    phi: f64,
) -> Result<QuantumState, GateError> {
    let r = rotation_matrix(theta, phi);
    let mut out = s.clone();
    for t in targets {
        out = out.apply_unitary(&r, &[t])?;
    }
    Ok(out)
}

/// Ramsey sequence with a mid-point echo on a remote pair: free evolution
/// for half the delay, pi pulses on both qubits, another half delay, then
/// pi/2 analysis pulses of phase `final_phase` on both.
///
/// The static gradient is applied as a relative phase rate between the two
/// qubits (module A frame). With `decoherence` set, the pair also dephases
/// over the full delay.
pub fn spin_echo_ramsey(
    s: &QuantumState,
    pair: (&str, &str),
    total_delay_s: f64,
    gradient_rad_per_s: f64,
    final_phase: f64,
    decoherence: Option<&MemoryDecoherence>,
) -> Result<QuantumState, GateError> {
    if pair.0 == pair.1 {
        return Err(GateError::SameQubit(pair.0.to_string()));
    }
    if total_delay_s < 0.0 || total_delay_s.is_nan() {
        return Err(GateError::NegativeDelay(total_delay_s));
    }
    let half = total_delay_s / 2.0;
    let targets = [pair.0, pair.1];
    let mut out = apply_pair_evolution(s, pair, gradient_rad_per_s, decoherence, half)?;
    out = rotate_all(&out, &targets, PI, 0.0)?;
    out = apply_pair_evolution(&out, pair, gradient_rad_per_s, decoherence, half)?;
    rotate_all(&out, &targets, FRAC_PI_2, final_phase)
}
