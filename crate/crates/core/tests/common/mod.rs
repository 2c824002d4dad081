//! Brute-force Fock-space model of the Bell-state analyzer, independent of
//! the library's projector formulation.
//!
//! Input modes: photon A enters beam-splitter port `a`, photon B port `b`.
//! Photon B's temporal mode is `v |t0> + sqrt(1 - v^2) |t1>`; photon A is in
//! `t0`. Outputs `c = (a + b)/sqrt2`, `d = (a - b)/sqrt2` each feed a
//! polarizing splitter. Detectors: 1 = cH, 2 = cV, 3 = dV, 4 = dH. Detectors
//! do not resolve the temporal mode.

#![allow(dead_code)]

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

/// Output mode: (port 0 = c / 1 = d, polarization 0 = H / 1 = V, time bin).
type Mode = (u8, u8, u8);

fn detector(m: Mode) -> u8 {
    match (m.0, m.1) {
        (0, 0) => 1,
        (0, 1) => 2,
        (1, 1) => 3,
        _ => 4,
    }
}

/// Creation operator of an input port expanded over output ports.
fn beam_splitter(port_b: bool) -> [(u8, f64); 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    if port_b {
        [(0, s), (1, -s)]
    } else {
        [(0, s), (1, s)]
    }
}

/// Coincidence probabilities `[P12, P34, P13, P24]` for the two-photon
/// polarization amplitudes `psi` (index `2 pol_a + pol_b`) at overlap `v`.
pub fn fock_coincidences(psi: &[C64; 4], v: f64) -> [f64; 4] {
    let time_b = [(0u8, v), (1u8, (1.0 - v * v).max(0.0).sqrt())];
    // Two-photon output amplitudes keyed by the unordered mode pair.
    let mut out: BTreeMap<(Mode, Mode), C64> = BTreeMap::new();
    for pa in 0..2u8 {
        for pb in 0..2u8 {
            let amp = psi[(2 * pa + pb) as usize];
            if amp == C64::new(0.0, 0.0) {
                continue;
            }
            for (port_a, ca) in beam_splitter(false) {
                for (port_b, cb) in beam_splitter(true) {
                    for (tb, ct) in time_b {
                        let ma = (port_a, pa, 0u8);
                        let mb = (port_b, pb, tb);
                        let key = if ma <= mb { (ma, mb) } else { (mb, ma) };
                        *out.entry(key).or_default() += amp * ca * cb * ct;
                    }
                }
            }
        }
    }
    let mut probs = [0.0; 4];
    for ((m1, m2), amp) in out {
        if m1 == m2 {
            continue;
        }
        let (d1, d2) = (detector(m1).min(detector(m2)), detector(m1).max(detector(m2)));
        let slot = match (d1, d2) {
            (1, 2) => 0,
            (3, 4) => 1,
            (1, 3) => 2,
            (2, 4) => 3,
            _ => continue,
        };
        probs[slot] += amp.norm_sqr();
    }
    probs
}

/// Single-photon polarization states H, V, D, R.
pub fn polarizations() -> [(&'static str, [C64; 2]); 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    [
        ("H", [o, z]),
        ("V", [z, o]),
        ("D", [C64::new(s, 0.0), C64::new(s, 0.0)]),
        ("R", [C64::new(s, 0.0), C64::new(0.0, -s)]),
    ]
}

/// All 16 product inputs as (name, amplitudes).
pub fn product_inputs() -> Vec<(String, [C64; 4])> {
    let mut v = Vec::new();
    for (na, a) in polarizations() {
        for (nb, b) in polarizations() {
            v.push((format!("{na}{nb}"), [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]));
        }
    }
    v
}
