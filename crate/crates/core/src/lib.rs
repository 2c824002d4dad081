//! Simulator of a modular trapped-ion network: heralded photonic links
//! between modules, phonon-bus gates within a module, phase tracking,
//! detection errors and protocol-level Monte Carlo.

// `!(x > 0.0)` style checks are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod config;
pub mod detection;
pub mod experiments;
pub mod gates;
pub mod netsim;
pub mod phase;
pub mod photonic;
pub mod state;
