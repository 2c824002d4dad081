//! Result emission for the command-line tool.
//!
//! Every run writes into the output directory:
//!
//! * `<table>.csv` per curve: a `# subcommand=.. seed=.. config_sha256=..`
//!   comment line, a header line, then comma-separated rows.
//! * `summary.toml`: flat `key = value` lines, starting with the same
//!   provenance keys.
//! * `resolved_config.toml`: the full scenario that ran, defaults included.
//!   Its SHA-256 is the `config_sha256` above.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, Scenario};
use crate::experiments::{run_experiment, ExperimentError, ExperimentOutput, Subcommand, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("writing {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Experiment(ExperimentError::Mismatch { .. }) => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        }
    }
}

/// Command-line overrides applied on top of the scenario file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub shots: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) -> Result<(), ConfigError> {
        if let Some(seed) = self.seed {
            s.run.seed = seed;
        }
        if let Some(t) = self.trials {
            s.run.n_trials = t;
        }
        if let Some(n) = self.shots {
            s.run.shots_per_point = n;
        }
        s.validate().map(|_| ())
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn toml_value(v: &Value) -> toml::Value {
    match v {
        Value::Num(x) => toml::Value::Float(*x),
        Value::Int(i) => toml::Value::Integer(*i),
        Value::Text(s) => toml::Value::String(s.clone()),
    }
}

fn seed_value(seed: u64) -> toml::Value {
    i64::try_from(seed).map_or_else(|_| toml::Value::String(seed.to_string()), toml::Value::Integer)
}

/// File contents of a run, keyed by file name, in emission order.
pub fn render(sub: Subcommand, scenario: &Scenario, output: &ExperimentOutput) -> Vec<(String, String)> {
    let config = scenario.emit();
    let hash = sha256_hex(&config);
    let seed = scenario.run.seed;
    let mut files = Vec::new();
    for t in &output.tables {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&t.columns).expect("in-memory write");
        for row in &t.rows {
            w.write_record(row.iter().map(|c| c.to_string())).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 table");
        files.push((
            format!("{}.csv", t.name),
            format!("# subcommand={sub} seed={seed} config_sha256={hash}\n{body}"),
        ));
    }
    let mut summary = String::new();
    let mut line = |k: &str, v: toml::Value| {
        let _ = writeln!(summary, "{k} = {v}");
    };
    line("subcommand", toml::Value::String(sub.to_string()));
    line("seed", seed_value(seed));
    line("config_sha256", toml::Value::String(hash));
    for (k, v) in &output.summary {
        line(k, toml_value(v));
    }
    files.push(("summary.toml".into(), summary));
    files.push(("resolved_config.toml".into(), config));
    files
}

/// Runs `sub` and writes its files into `out_dir`; returns the written paths.
pub fn run_scenario(
    sub: Subcommand,
    scenario: &Scenario,
    out_dir: &Path,
) -> Result<(ExperimentOutput, Vec<PathBuf>), CliError> {
    let output = run_experiment(sub, scenario)?;
    let io = |path: &Path, e: std::io::Error| CliError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let mut paths = Vec::new();
    for (name, text) in render(sub, scenario, &output) {
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| io(&p, e))?;
        paths.push(p);
    }
    Ok((output, paths))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn timing_files() {
        let s = Scenario::default();
        let out = run_experiment(Subcommand::Timing, &s).unwrap();
        let files = render(Subcommand::Timing, &s, &out);
        let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["timing.csv", "summary.toml", "resolved_config.toml"]);
        let csv = &files[0].1;
        assert!(csv.starts_with("# subcommand=timing seed=1 config_sha256="));
        assert_eq!(csv.lines().nth(1), Some("detuning_hz,sideband_rabi_hz,gate_time_s,phase_flip_time_s"));
        let summary: toml::Table = files[1].1.parse().unwrap();
        assert!((summary["gate_time_us"].as_float().unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(Scenario::parse(&files[2].1).unwrap().scenario, s);
    }

    #[test]
    fn exit_codes() {
        let v = CliError::Config(ConfigError::UnknownKey("x".into()));
        assert_eq!(v.exit_code(), EXIT_VALIDATION);
        let m = CliError::Experiment(ExperimentError::Mismatch {
            subcommand: Subcommand::Coherence,
            message: String::new(),
        });
        assert_eq!(m.exit_code(), EXIT_VALIDATION);
        let r = CliError::Output { path: String::new(), message: String::new() };
        assert_eq!(r.exit_code(), EXIT_RUNTIME);
    }
}
