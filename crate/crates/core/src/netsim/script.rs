//! Protocol scripts: declared qubits and an ordered list of steps.
//!
//! Text form of a step (one per string):
//!
//! ```text
//! herald <qubit> <qubit>          remote entanglement between two modules
//! reinit <qubit>                  optical-pumping reset to |0>
//! ms <qubit> <qubit> [phi_a]      phonon-bus gate, phi_a defaults to the gate section
//! rotate <q1,q2,..> <theta> <phi|scan>
//! wait <seconds|scan>
//! measure                         terminal readout of every qubit
//! ```
//!
//! A scanned parameter may be scaled: `0.5*scan` takes half the scan value.
//!
//! Angles accept plain numbers or multiples of `pi` such as `pi/2`, `-pi`,
//! `0.5*pi`.

use std::f64::consts::PI;
use std::fmt;

use super::NetsimError;

/// A numeric step parameter, fixed or a multiple of the scan value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Param {
    Fixed(f64),
    Scan(f64),
}

impl Param {
    pub fn resolve(self, scan_value: f64) -> f64 {
        match self {
            Param::Fixed(v) => v,
            Param::Scan(scale) => scale * scan_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Herald { a: String, b: String },
    Reinit { qubit: String },
    Ms { a: String, b: String, phi_a: Option<f64> },
    Rotate { targets: Vec<String>, theta: f64, phi: Param },
    Wait { duration: Param },
    Measure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Qubit {
    pub name: String,
    pub module: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolScript {
    qubits: Vec<Qubit>,
    steps: Vec<Step>,
}

fn script_err(step: usize, msg: impl Into<String>) -> NetsimError {
    NetsimError::Script {
        step,
        message: msg.into(),
    }
}

/// Parses an angle: a number or a multiple/fraction of `pi`.
pub fn parse_angle(s: &str) -> Option<f64> {
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, s),
    };
    let (num, den) = match body.split_once('/') {
        Some((n, d)) => (n, d.parse::<f64>().ok().filter(|d| *d != 0.0)?),
        None => (body, 1.0),
    };
    let coeff = if num == "pi" {
        1.0
    } else {
        num.strip_suffix("*pi")
            .or_else(|| num.strip_suffix("pi"))?
            .parse::<f64>()
            .ok()?
    };
    Some(sign * coeff * PI / den)
}

fn parse_param(s: &str, angle: bool) -> Option<Param> {
    if s == "scan" {
        return Some(Param::Scan(1.0));
    }
    if let Some(scale) = s.strip_suffix("*scan") {
        return scale.parse::<f64>().ok().filter(|v| v.is_finite()).map(Param::Scan);
    }
    let v = if angle { parse_angle(s) } else { s.parse::<f64>().ok() };
    v.filter(|v| v.is_finite()).map(Param::Fixed)
}

impl Step {
    pub fn parse(text: &str, index: usize) -> Result<Self, NetsimError> {
        let tok: Vec<&str> = text.split_whitespace().collect();
        let arity = |n: usize| {
            if tok.len() == n {
                Ok(())
            } else {
                Err(script_err(index, format!("`{}` takes {} argument(s)", tok[0], n - 1)))
            }
        };
        let Some(&op) = tok.first() else {
            return Err(script_err(index, "empty step"));
        };
        let step = match op {
            "herald" => {
                arity(3)?;
                Step::Herald { a: tok[1].into(), b: tok[2].into() }
            }
            "reinit" => {
                arity(2)?;
                Step::Reinit { qubit: tok[1].into() }
            }
            "ms" => {
                if tok.len() != 3 {
                    arity(4)?;
                }
                let phi_a = match tok.get(3) {
                    Some(t) => Some(parse_angle(t).ok_or_else(|| script_err(index, format!("bad angle `{t}`")))?),
                    None => None,
                };
                Step::Ms { a: tok[1].into(), b: tok[2].into(), phi_a }
            }
            "rotate" => {
                arity(4)?;
                let targets: Vec<String> = tok[1].split(',').map(str::to_string).collect();
                let theta = parse_angle(tok[2]).ok_or_else(|| script_err(index, format!("bad angle `{}`", tok[2])))?;
                let phi = parse_param(tok[3], true).ok_or_else(|| script_err(index, format!("bad angle `{}`", tok[3])))?;
                Step::Rotate { targets, theta, phi }
            }
            "wait" => {
                arity(2)?;
                let duration =
                    parse_param(tok[1], false).ok_or_else(|| script_err(index, format!("bad duration `{}`", tok[1])))?;
                if matches!(duration, Param::Fixed(d) | Param::Scan(d) if d < 0.0) {
                    return Err(script_err(index, "negative wait"));
                }
                Step::Wait { duration }
            }
            "measure" => {
                arity(1)?;
                Step::Measure
            }
            other => return Err(script_err(index, format!("unknown step `{other}`"))),
        };
        Ok(step)
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Fixed(v) => write!(f, "{v:?}"),
            Param::Scan(scale) if *scale == 1.0 => f.write_str("scan"),
            Param::Scan(scale) => write!(f, "{scale:?}*scan"),
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Herald { a, b } => write!(f, "herald {a} {b}"),
            Step::Reinit { qubit } => write!(f, "reinit {qubit}"),
            Step::Ms { a, b, phi_a: None } => write!(f, "ms {a} {b}"),
            Step::Ms { a, b, phi_a: Some(p) } => write!(f, "ms {a} {b} {p:?}"),
            Step::Rotate { targets, theta, phi } => write!(f, "rotate {} {theta:?} {phi}", targets.join(",")),
            Step::Wait { duration } => write!(f, "wait {duration}"),
            Step::Measure => f.write_str("measure"),
        }
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl ProtocolScript {
    /// Builds and validates a script. Qubits are declared as `name:module`.
    pub fn new(qubits: &[&str], steps: &[&str]) -> Result<Self, NetsimError> {
        let mut decl = Vec::with_capacity(qubits.len());
        for q in qubits {
            let (name, module) = q
                .split_once(':')
                .ok_or_else(|| script_err(0, format!("qubit `{q}` must be declared as name:module")))?;
            decl.push(Qubit {
                name: name.trim().to_string(),
                module: module.trim().to_string(),
            });
        }
        let steps = steps
            .iter()
            .enumerate()
            .map(|(i, s)| Step::parse(s, i))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_parts(decl, steps)
    }

    pub fn from_parts(qubits: Vec<Qubit>, steps: Vec<Step>) -> Result<Self, NetsimError> {
        let s = Self { qubits, steps };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), NetsimError> {
        if self.qubits.is_empty() {
            return Err(script_err(0, "no qubits declared"));
        }
        if self.qubits.len() > crate::state::DEFAULT_MAX_SUBSYSTEMS {
            return Err(script_err(0, format!("at most {} qubits", crate::state::DEFAULT_MAX_SUBSYSTEMS)));
        }
        for (i, q) in self.qubits.iter().enumerate() {
            if !valid_name(&q.name) || !valid_name(&q.module) {
                return Err(script_err(0, format!("qubit and module names must be alphanumeric: `{}:{}`", q.name, q.module)));
            }
            if self.qubits[..i].iter().any(|p| p.name == q.name) {
                return Err(script_err(0, format!("qubit `{}` declared twice", q.name)));
            }
        }
        let module = |i: usize, name: &str| -> Result<&str, NetsimError> {
            self.module_of(name)
                .ok_or_else(|| script_err(i, format!("undeclared qubit `{name}`")))
        };
        let mut heralds = 0;
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                Step::Herald { a, b } => {
                    heralds += 1;
                    if heralds > 1 {
                        return Err(script_err(i, "at most one herald step"));
                    }
                    if module(i, a)? == module(i, b)? {
                        return Err(script_err(i, "herald needs qubits in different modules"));
                    }
                }
                Step::Reinit { qubit } => {
                    module(i, qubit)?;
                }
                Step::Ms { a, b, .. } => {
                    if a == b {
                        return Err(script_err(i, "ms needs two distinct qubits"));
                    }
                    if module(i, a)? != module(i, b)? {
                        return Err(script_err(i, "ms needs qubits in the same module"));
                    }
                }
                Step::Rotate { targets, .. } => {
                    for (k, t) in targets.iter().enumerate() {
                        module(i, t)?;
                        if targets[..k].contains(t) {
                            return Err(script_err(i, format!("`{t}` listed twice")));
                        }
                    }
                }
                Step::Wait { .. } => {}
                Step::Measure => {
                    if i + 1 != self.steps.len() {
                        return Err(script_err(i, "measure must be the last step"));
                    }
                }
            }
        }
        if self.steps.last() != Some(&Step::Measure) {
            return Err(script_err(self.steps.len(), "script must end with measure"));
        }
        Ok(())
    }

    pub fn qubits(&self) -> &[Qubit] {
        &self.qubits
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn names(&self) -> Vec<&str> {
        self.qubits.iter().map(|q| q.name.as_str()).collect()
    }

    pub fn modules(&self) -> Vec<&str> {
        self.qubits.iter().map(|q| q.module.as_str()).collect()
    }

    pub fn module_of(&self, name: &str) -> Option<&str> {
        self.qubits.iter().find(|q| q.name == name).map(|q| q.module.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.qubits.iter().position(|q| q.name == name)
    }

    pub fn herald_pair(&self) -> Option<(&str, &str)> {
        self.steps.iter().find_map(|s| match s {
            Step::Herald { a, b } => Some((a.as_str(), b.as_str())),
            _ => None,
        })
    }

    pub fn has_scan(&self) -> bool {
        self.steps.iter().any(|s| {
            matches!(s, Step::Rotate { phi: Param::Scan(_), .. } | Step::Wait { duration: Param::Scan(_) })
        })
    }

    /// Step strings in the text form accepted by [`ProtocolScript::new`].
    pub fn step_strings(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.to_string()).collect()
    }
}
