//! C ABI over the simulator.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `_free` function. Every fallible call returns an
//! [`IonnetStatus`]; on failure the message is available from
//! [`ionnet_last_error`] on the same thread until the next failing call.
//! Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ionnet::cli::{run_scenario, CliError};
use ionnet::config::{load_scenario, ConfigError, Scenario};
use ionnet::experiments::{run_experiment, ExperimentError, ExperimentOutput, Subcommand, Value};
use ionnet::photonic::{expected_rate, success_probability};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IonnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Scenario text or file could not be read or parsed.
    Config = 3,
    /// Scenario or request violates an invariant.
    Validation = 4,
    /// Simulation or output failure.
    Runtime = 5,
    /// Requested summary key is absent or not numeric.
    NotFound = 6,
    Panic = 7,
}

/// Opaque scenario handle.
pub struct IonnetScenario {
    inner: Scenario,
}

/// Opaque experiment result handle.
pub struct IonnetOutput {
    inner: ExperimentOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: IonnetStatus, msg: impl Into<String>) -> IonnetStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> IonnetStatus) -> IonnetStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(IonnetStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, IonnetStatus> {
    if p.is_null() {
        return Err(fail(IonnetStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(IonnetStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn config_status(e: &ConfigError) -> IonnetStatus {
    match e {
        ConfigError::Invalid { .. } | ConfigError::UnknownKey(_) => IonnetStatus::Validation,
        _ => IonnetStatus::Config,
    }
}

fn cli_status(e: &CliError) -> IonnetStatus {
    match e {
        CliError::Config(c) => config_status(c),
        CliError::Experiment(ExperimentError::Mismatch { .. }) => IonnetStatus::Validation,
        _ => IonnetStatus::Runtime,
    }
}

fn experiment_status(e: &ExperimentError) -> IonnetStatus {
    match e {
        ExperimentError::Mismatch { .. } => IonnetStatus::Validation,
        _ => IonnetStatus::Runtime,
    }
}

fn subcommand_arg(p: *const c_char) -> Result<Subcommand, IonnetStatus> {
    let name = unsafe { str_arg(p, "subcommand")? };
    name.parse::<Subcommand>()
        .map_err(|_| fail(IonnetStatus::Validation, format!("unknown subcommand `{name}`")))
}

fn store<T>(out: *mut *mut T, value: T) -> IonnetStatus {
    unsafe { *out = Box::into_raw(Box::new(value)) };
    IonnetStatus::Ok
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ionnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// New scenario with every field at its default.
#[no_mangle]
pub extern "C" fn ionnet_scenario_default() -> *mut IonnetScenario {
    Box::into_raw(Box::new(IonnetScenario {
        inner: Scenario::default(),
    }))
}

/// Parses scenario text into `*out`.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ionnet_scenario_parse(text: *const c_char, out: *mut *mut IonnetScenario) -> IonnetStatus {
    guard(|| {
        if out.is_null() {
            return fail(IonnetStatus::NullPointer, "out is null");
        }
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Scenario::parse(text) {
            Ok(l) => store(out, IonnetScenario { inner: l.scenario }),
            Err(e) => fail(config_status(&e), e.to_string()),
        }
    })
}

/// Loads a scenario file into `*out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ionnet_scenario_load(path: *const c_char, out: *mut *mut IonnetScenario) -> IonnetStatus {
    guard(|| {
        if out.is_null() {
            return fail(IonnetStatus::NullPointer, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_scenario(Path::new(path)) {
            Ok(l) => store(out, IonnetScenario { inner: l.scenario }),
            Err(e) => fail(config_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ionnet_scenario_free(scenario: *mut IonnetScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Sets the root seed, trial count and shots per point; a zero count leaves
/// that field unchanged.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ionnet_scenario_set_run(
    scenario: *mut IonnetScenario,
    seed: u64,
    n_trials: usize,
    shots_per_point: usize,
) -> IonnetStatus {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(IonnetStatus::NullPointer, "scenario is null");
        };
        let mut next = s.inner.clone();
        next.run.seed = seed;
        if n_trials > 0 {
            next.run.n_trials = n_trials;
        }
        if shots_per_point > 0 {
            next.run.shots_per_point = shots_per_point;
        }
        match next.validate() {
            Ok(_) => {
                s.inner = next;
                IonnetStatus::Ok
            }
            Err(e) => fail(config_status(&e), e.to_string()),
        }
    })
}

/// Resolved scenario text; release with [`ionnet_string_free`].
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ionnet_scenario_emit(scenario: *const IonnetScenario) -> *mut c_char {
    let Some(s) = scenario.as_ref() else {
        set_error("scenario is null");
        return ptr::null_mut();
    };
    CString::new(s.inner.emit()).map_or(ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ionnet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Heralded-pair success probability per attempt and expected rate in 1/s.
///
/// # Safety
/// `scenario` must be a live handle; the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ionnet_link_budget(
    scenario: *const IonnetScenario,
    success_probability_out: *mut f64,
    rate_hz_out: *mut f64,
) -> IonnetStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(IonnetStatus::NullPointer, "scenario is null");
        };
        if success_probability_out.is_null() || rate_hz_out.is_null() {
            return fail(IonnetStatus::NullPointer, "output pointer is null");
        }
        *success_probability_out = success_probability(&s.inner.link_budget);
        *rate_hz_out = expected_rate(&s.inner.link_budget);
        IonnetStatus::Ok
    })
}

/// Runs a subcommand (its command-line name) and writes its files into
/// `out_dir`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ionnet_run_to_dir(
    scenario: *const IonnetScenario,
    subcommand: *const c_char,
    out_dir: *const c_char,
) -> IonnetStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(IonnetStatus::NullPointer, "scenario is null");
        };
        let sub = match subcommand_arg(subcommand) {
            Ok(x) => x,
            Err(st) => return st,
        };
        let dir = match str_arg(out_dir, "out_dir") {
            Ok(d) => d,
            Err(st) => return st,
        };
        match run_scenario(sub, &s.inner, Path::new(dir)) {
            Ok(_) => IonnetStatus::Ok,
            Err(e) => fail(cli_status(&e), e.to_string()),
        }
    })
}

/// Runs a subcommand in memory; release the result with
/// [`ionnet_output_free`].
///
/// # Safety
/// Pointers must be valid; `subcommand` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ionnet_run(
    scenario: *const IonnetScenario,
    subcommand: *const c_char,
    out: *mut *mut IonnetOutput,
) -> IonnetStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(IonnetStatus::NullPointer, "scenario is null");
        };
        if out.is_null() {
            return fail(IonnetStatus::NullPointer, "out is null");
        }
        let sub = match subcommand_arg(subcommand) {
            Ok(x) => x,
            Err(st) => return st,
        };
        match run_experiment(sub, &s.inner) {
            Ok(o) => store(out, IonnetOutput { inner: o }),
            Err(e) => fail(experiment_status(&e), e.to_string()),
        }
    })
}

/// Numeric summary value of a run.
///
/// # Safety
/// Pointers must be valid; `key` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ionnet_output_get(
    output: *const IonnetOutput,
    key: *const c_char,
    value_out: *mut f64,
) -> IonnetStatus {
    guard(|| {
        let Some(o) = output.as_ref() else {
            return fail(IonnetStatus::NullPointer, "output is null");
        };
        if value_out.is_null() {
            return fail(IonnetStatus::NullPointer, "value_out is null");
        }
        let key = match str_arg(key, "key") {
            Ok(k) => k,
            Err(st) => return st,
        };
        match o.inner.get(key) {
            Some(Value::Num(x)) => *value_out = *x,
            Some(Value::Int(i)) => *value_out = *i as f64,
            _ => return fail(IonnetStatus::NotFound, format!("no numeric summary value `{key}`")),
        }
        IonnetStatus::Ok
    })
}

/// # Safety
/// `output` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ionnet_output_free(output: *mut IonnetOutput) {
    if !output.is_null() {
        drop(Box::from_raw(output));
    }
}
