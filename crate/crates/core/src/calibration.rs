//! Calibration of the noise parameters against target figures of merit.
//! The calibrated constants used as defaults are regenerated by
//! `cargo run -p ionnet --example calibrate`.

use crate::config::Scenario;
use crate::experiments::{modular_metrics_exact, ExperimentError};
use crate::gates::{ms_gate, ms_unitary, GateNoise};
use crate::photonic::{heralded_fidelity, LinkError, LinkErrorModel};
use crate::state::QuantumState;

/// Crosstalk of the re-initialization beam that best reproduces the
/// conditional three-qubit targets with the default detectors.
pub const CALIBRATED_REINIT_CROSSTALK: f64 = 0.130_078_895_937_921_5;

/// Target conditional figures of the three-qubit protocol: even parity given
/// the remote qubit reads 1, odd parity given it reads 0, and fidelity of the
/// conditioned pair.
pub const THREE_QUBIT_TARGETS: ThreeQubitTargets = ThreeQubitTargets {
    even_given_one: 0.71,
    odd_given_zero: 0.75,
    fidelity_given_one: 0.63,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeQubitTargets {
    pub even_given_one: f64,
    pub odd_given_zero: f64,
    pub fidelity_given_one: f64,
}

/// Bisection for the root of a monotone function on `[lo, hi]`.
fn bisect<F: FnMut(f64) -> Result<f64, E>, E>(mut f: F, mut lo: f64, mut hi: f64) -> Result<f64, E> {
    let rising = f(hi)? > f(lo)?;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if (f(mid)? > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Mode overlap giving heralded fidelity `target` for the given atom-photon
/// fidelity. Fails when the target is out of reach at perfect overlap.
pub fn calibrate_mode_overlap(atom_photon_fidelity: f64, target: f64) -> Result<f64, LinkError> {
    let f = |v: f64| {
        heralded_fidelity(&LinkErrorModel {
            atom_photon_fidelity,
            mode_overlap: v,
        })
        .map(|x| x - target)
    };
    if f(1.0)? < 0.0 {
        return Err(LinkError::OutOfRange {
            field: "target fidelity",
            value: target,
        });
    }
    bisect(f, 0.0, 1.0)
}

/// Two-qubit depolarizing probability after the gate that brings the gate
/// output fidelity to `target`.
pub fn calibrate_gate_depolarizing(target: f64) -> Result<f64, crate::gates::GateError> {
    let zero = QuantumState::basis(&["a", "b"], &[0, 0])?;
    let ideal = zero.apply_unitary(&ms_unitary(0.0), &["a", "b"])?;
    bisect(
        |p| {
            let s = ms_gate(&zero, ("a", "b"), 0.0, &GateNoise { depolarizing_p: p })?;
            Ok(s.fidelity(&ideal)? - target)
        },
        0.0,
        1.0,
    )
}

/// Largest deviation of the exact, detector-inclusive conditional metrics
/// from `targets`.
pub fn three_qubit_deviation(s: &Scenario, targets: &ThreeQubitTargets) -> Result<f64, ExperimentError> {
    let m = modular_metrics_exact(s)?;
    Ok([
        m.even_given_one.exact - targets.even_given_one,
        m.odd_given_zero.exact - targets.odd_given_zero,
        m.fidelity_given_one.exact - targets.fidelity_given_one,
    ]
    .into_iter()
    .map(f64::abs)
    .fold(0.0, f64::max))
}

/// Minimax fit of `protocol.reinit_crosstalk_p` on `[0, 0.5]` by golden
/// section search.
pub fn calibrate_reinit_crosstalk(base: &Scenario, targets: &ThreeQubitTargets) -> Result<f64, ExperimentError> {
    let mut s = base.clone();
    let mut dev = |p: f64| {
        s.protocol.reinit_crosstalk_p = p;
        three_qubit_deviation(&s, targets)
    };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, 0.5);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (dev(c)?, dev(d)?);
    while b - a > 1e-12 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = dev(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = dev(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Default scenario with the calibrated re-initialization crosstalk.
pub fn calibrated_three_qubit_scenario() -> Scenario {
    let mut s = Scenario::default();
    s.protocol.reinit_crosstalk_p = CALIBRATED_REINIT_CROSSTALK;
    s
}
