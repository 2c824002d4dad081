//! Recomputes the calibrated noise constants from their target figures.

use ionnet::calibration::{
    calibrate_gate_depolarizing, calibrate_mode_overlap, calibrate_reinit_crosstalk, calibrated_three_qubit_scenario,
    THREE_QUBIT_TARGETS,
};
use ionnet::config::Scenario;
use ionnet::experiments::modular_metrics_exact;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("mode_overlap          = {:.15}", calibrate_mode_overlap(0.92, 0.79)?);
    println!("gate depolarizing_p   = {:.15}", calibrate_gate_depolarizing(0.85)?);
    let x = calibrate_reinit_crosstalk(&Scenario::default(), &THREE_QUBIT_TARGETS)?;
    println!("reinit_crosstalk_p    = {x:.16}");
    let m = modular_metrics_exact(&calibrated_three_qubit_scenario())?;
    println!(
        "three-qubit metrics   even|1 = {:.4}  odd|0 = {:.4}  fidelity|1 = {:.4}",
        m.even_given_one.exact, m.odd_given_zero.exact, m.fidelity_given_one.exact
    );
    println!(
        "  without detection   even|1 = {:.4}  odd|0 = {:.4}  fidelity|1 = {:.4}",
        m.even_given_one.corrected, m.odd_given_zero.corrected, m.fidelity_given_one.corrected
    );
    Ok(())
}
