mod common;

use std::f64::consts::PI;

use ionnet::gates::GateNoise;
use ionnet::netsim::{fit_rate_times, run_protocol, ProtocolConfig, ProtocolScript};
use ionnet::phase::PhaseLedger;
use ionnet::photonic::{bsm_distribution, DetectorPair};
use ionnet::state::QuantumState;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

#[test]
fn bsm_matches_fock_enumeration() {
    for v in [1.0, 0.0, 0.5, 0.9, 0.923_746_765_316_937] {
        for (name, psi) in common::product_inputs() {
            let s = QuantumState::from_ket(&["pa", "pb"], psi.to_vec()).unwrap();
            let lib = bsm_distribution(&s, v).unwrap();
            let oracle = common::fock_coincidences(&psi, v);
            for (k, pair) in DetectorPair::ALL.into_iter().enumerate() {
                let d = (lib.probability(pair) - oracle[k]).abs();
                assert!(d < 1e-10, "{name} v={v} {pair}: {} vs {}", lib.probability(pair), oracle[k]);
            }
        }
    }
}

#[test]
fn bsm_matches_fock_on_entangled_inputs() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    let bells = [
        [z, C64::new(s, 0.0), C64::new(s, 0.0), z],
        [z, C64::new(s, 0.0), C64::new(-s, 0.0), z],
        [C64::new(s, 0.0), z, z, C64::new(0.0, s)],
    ];
    for psi in bells {
        for v in [1.0, 0.7] {
            let st = QuantumState::from_ket(&["pa", "pb"], psi.to_vec()).unwrap();
            let lib = bsm_distribution(&st, v).unwrap();
            let oracle = common::fock_coincidences(&psi, v);
            for (k, pair) in DetectorPair::ALL.into_iter().enumerate() {
                assert!((lib.probability(pair) - oracle[k]).abs() < 1e-10);
            }
        }
    }
}

fn tripartite(phi_a: f64, phi_ab: f64) -> QuantumState {
    // Order q1 q2 q3: ((|00> - i e^{-i phi_a}|11>)|1> + e^{i phi_ab}(|01> - i|10>)|0>) / 2
    let mut amp = vec![C64::new(0.0, 0.0); 8];
    let e = C64::from_polar(1.0, phi_ab);
    let i = C64::new(0.0, 1.0);
    amp[0b001] = C64::new(0.5, 0.0);
    amp[0b111] = -i * C64::from_polar(0.5, -phi_a);
    amp[0b010] = 0.5 * e;
    amp[0b100] = -i * 0.5 * e;
    QuantumState::from_ket(&["q1", "q2", "q3"], amp).unwrap()
}

#[test]
fn three_qubit_state_is_tripartite() {
    let script = ProtocolScript::new(
        &["q1:A", "q2:A", "q3:B"],
        &["herald q2 q3", "reinit q1", "ms q1 q2", "measure"],
    )
    .unwrap();
    for omega in [0.0, 2.0 * PI * 2500.0] {
        for phi_a in [0.0, 0.4, PI / 2.0, 2.5] {
            let mut cfg = ProtocolConfig::noiseless();
            cfg.phi_a = phi_a;
            cfg.ledger = PhaseLedger { delta_omega_ab: omega, ..PhaseLedger::default() };
            let res = run_protocol(&script, &cfg, &[], 0, 1).unwrap();
            let branches = &res.points[0].branches;
            assert_eq!(branches.len(), 4);
            for b in branches {
                let pair = b.pair.unwrap();
                let phi_ab = pair.phi_d() + cfg.ledger.static_phase() + omega * cfg.gate_time_s;
                let f = b.state.fidelity(&tripartite(phi_a, phi_ab)).unwrap();
                assert!((f - 1.0).abs() < 1e-10, "omega={omega} phi_a={phi_a} {pair}: {f}");
            }
        }
    }
}

#[test]
fn noiseless_gate_ignores_depolarizing_default() {
    assert_eq!(ProtocolConfig::noiseless().gate_noise, GateNoise::noiseless());
}

#[test]
fn rate_fit_recovers_synthetic_rates() {
    for (k, rate) in [0.1, 4.5, 10.0, 1000.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let exp = Exp::new(rate).unwrap();
        let t: Vec<f64> = (0..20_000).map(|_| exp.sample(&mut rng)).collect();
        let fit = fit_rate_times(&t).unwrap();
        assert!((fit.rate - rate).abs() < 3.0 * fit.std_err, "{rate}: {} ± {}", fit.rate, fit.std_err);
    }
}
