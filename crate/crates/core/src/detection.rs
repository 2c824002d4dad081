//! Readout imperfections: per-ion state flips and the one-bright/two-bright
//! confusion of a detector shared by two ions.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("{field} = {value} outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("layout covers {layout} bits but {bits} were given")]
    LengthMismatch { layout: usize, bits: usize },
    #[error("bit {0} appears in more than one detector group or is out of range")]
    BadGroup(usize),
    #[error("a shared detector reads at most two ions, got {0}")]
    GroupTooLarge(usize),
    #[error("bit values must be 0 or 1")]
    NotABit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorModel {
    /// Probability that an ion is reported in the wrong state.
    pub single_qubit_error: f64,
    /// Probability that one-bright and two-bright counts on a shared
    /// detector are confused.
    pub two_qubit_overlap: f64,
    /// Modules whose ions are imaged onto a single shared detector.
    pub shared_modules: Vec<String>,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            single_qubit_error: 0.01,
            two_qubit_overlap: 0.08,
            shared_modules: vec!["A".to_string()],
        }
    }
}

impl DetectorModel {
    pub fn ideal() -> Self {
        Self {
            single_qubit_error: 0.0,
            two_qubit_overlap: 0.0,
            shared_modules: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        for (field, value) in [
            ("single_qubit_error", self.single_qubit_error),
            ("two_qubit_overlap", self.two_qubit_overlap),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(DetectionError::OutOfRange { field, value });
            }
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.single_qubit_error == 0.0 && self.two_qubit_overlap == 0.0
    }

    /// Detector grouping for bits whose modules are `modules` (bit order).
    pub fn layout_for(&self, modules: &[&str]) -> Result<DetectorLayout, DetectionError> {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut shared: Vec<(String, usize)> = Vec::new();
        for (i, m) in modules.iter().enumerate() {
            if self.shared_modules.iter().any(|s| s == m) {
                match shared.iter().find(|(name, _)| name == m) {
                    Some(&(_, g)) => groups[g].push(i),
                    None => {
                        shared.push((m.to_string(), groups.len()));
                        groups.push(vec![i]);
                    }
                }
            } else {
                groups.push(vec![i]);
            }
        }
        DetectorLayout::new(modules.len(), groups)
    }
}

/// Partition of the measured bits into detectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectorLayout {
    n_bits: usize,
    groups: Vec<Vec<usize>>,
}

impl DetectorLayout {
    pub fn new(n_bits: usize, groups: Vec<Vec<usize>>) -> Result<Self, DetectionError> {
        let mut seen = vec![false; n_bits];
        for g in &groups {
            if g.len() > 2 {
                return Err(DetectionError::GroupTooLarge(g.len()));
            }
            for &b in g {
                if b >= n_bits || seen[b] {
                    return Err(DetectionError::BadGroup(b));
                }
                seen[b] = true;
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return Err(DetectionError::BadGroup(b));
        }
        Ok(Self { n_bits, groups })
    }

    /// Every bit on its own detector.
    pub fn individual(n_bits: usize) -> Self {
        Self {
            n_bits,
            groups: (0..n_bits).map(|b| vec![b]).collect(),
        }
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    fn shared_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.groups.iter().filter(|g| g.len() == 2).map(|g| (g[0], g[1]))
    }
}

/// Samples the reported bits for the true bits `true_bits`.
pub fn apply_readout<R: Rng + ?Sized>(
    true_bits: &[u8],
    model: &DetectorModel,
    layout: &DetectorLayout,
    rng: &mut R,
) -> Result<Vec<u8>, DetectionError> {
    if true_bits.len() != layout.n_bits {
        return Err(DetectionError::LengthMismatch {
            layout: layout.n_bits,
            bits: true_bits.len(),
        });
    }
    if true_bits.iter().any(|&b| b > 1) {
        return Err(DetectionError::NotABit);
    }
    let mut out = true_bits.to_vec();
    if model.single_qubit_error > 0.0 {
        for b in out.iter_mut() {
            if rng.random::<f64>() < model.single_qubit_error {
                *b ^= 1;
            }
        }
    }
    if model.two_qubit_overlap > 0.0 {
        for (i, j) in layout.shared_pairs() {
            match out[i] + out[j] {
                2 if rng.random::<f64>() < model.two_qubit_overlap => {
                    if rng.random::<bool>() {
                        out[i] = 0;
                    } else {
                        out[j] = 0;
                    }
                }
                1 if rng.random::<f64>() < model.two_qubit_overlap => {
                    out[i] = 1;
                    out[j] = 1;
                }
                _ => {}
            }
        }
    }
    Ok(out)
}

/// Column-stochastic matrix `M[reported][true]` over basis indices (first bit
/// most significant), equal to the distribution sampled by [`apply_readout`].
pub fn confusion_matrix(model: &DetectorModel, layout: &DetectorLayout) -> DMatrix<f64> {
    let n = layout.n_bits;
    let dim = 1usize << n;
    let bit = |idx: usize, k: usize| (idx >> (n - 1 - k)) & 1;
    let e = model.single_qubit_error;
    let mut flips = DMatrix::<f64>::zeros(dim, dim);
    for t in 0..dim {
        for r in 0..dim {
            let d = (t ^ r).count_ones() as i32;
            flips[(r, t)] = e.powi(d) * (1.0 - e).powi(n as i32 - d);
        }
    }
    let mut m = flips;
    let ov = model.two_qubit_overlap;
    for (i, j) in layout.shared_pairs() {
        let mi = 1usize << (n - 1 - i);
        let mj = 1usize << (n - 1 - j);
        let mut c = DMatrix::<f64>::zeros(dim, dim);
        for t in 0..dim {
            match bit(t, i) + bit(t, j) {
                2 => {
                    c[(t, t)] += 1.0 - ov;
                    c[(t & !mi, t)] += ov / 2.0;
                    c[(t & !mj, t)] += ov / 2.0;
                }
                1 => {
                    c[(t, t)] += 1.0 - ov;
                    c[(t | mi | mj, t)] += ov;
                }
                _ => c[(t, t)] = 1.0,
            }
        }
        m = c * m;
    }
    m
}

/// Reported outcome distribution for the true distribution `probs`.
pub fn apply_confusion(probs: &[f64], model: &DetectorModel, layout: &DetectorLayout) -> Vec<f64> {
    let m = confusion_matrix(model, layout);
    (0..probs.len())
        .map(|r| (0..probs.len()).map(|t| m[(r, t)] * probs[t]).sum())
        .collect()
}
