//! C ABI for the optopulse toolkit.
//!
//! Every function returns an [`OptopulseStatus`]. Results that are documents
//! come back as NUL-terminated JSON strings owned by the library and must be
//! released with [`optopulse_string_free`]. Scenarios are opaque handles
//! released with [`optopulse_scenario_free`]. After a failure the message is
//! available from [`optopulse_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use optopulse::bch::{compile_linear_beamsplitter, Compensation, Sideband};
use optopulse::harness::{feasibility_table, simulate};
use optopulse::params::{derive_g0, pulse_power_requirement, FeasibilityInput, Regime, SystemParams};
use optopulse::scenario::Scenario;
use optopulse::Error;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptopulseStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Schema = 3,
    Domain = 4,
    Precondition = 5,
    Numeric = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque validated scenario.
pub struct OptopulseScenario {
    inner: Scenario,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> OptopulseStatus {
    match e {
        Error::Schema { .. } => OptopulseStatus::Schema,
        Error::Domain(_) | Error::UnsupportedSequence(_) | Error::Dimension(_) | Error::NonHermitian(_) => {
            OptopulseStatus::Domain
        }
        Error::Precondition(_) | Error::Budget { .. } | Error::UndefinedRate(_) => OptopulseStatus::Precondition,
        Error::Instability { .. } | Error::NormDrift { .. } => OptopulseStatus::Numeric,
        Error::Io(_) | Error::Csv(_) => OptopulseStatus::Io,
    }
}

struct Failure(OptopulseStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OptopulseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OptopulseStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {message}"));
            OptopulseStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(OptopulseStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(OptopulseStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let c = CString::new(s).map_err(|e| Failure(OptopulseStatus::InvalidUtf8, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn write_f64(out: *mut f64, v: f64) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = v;
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string(v).map_err(|e| Failure(OptopulseStatus::Schema, e.to_string()))
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call on the same thread.
#[no_mangle]
pub extern "C" fn optopulse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn optopulse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn optopulse_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a scenario. Relative control file paths resolve
/// against `base_dir`, which may be null for the current directory.
///
/// # Safety
/// `json` and `base_dir` must be null or NUL-terminated; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn optopulse_scenario_from_json(
    json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut OptopulseScenario,
) -> OptopulseStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let text = read_str(json, "json")?;
        let inner = if base_dir.is_null() {
            Scenario::from_json(text)?
        } else {
            Scenario::from_json_in(text, Path::new(read_str(base_dir, "base_dir")?))?
        };
        *out = Box::into_raw(Box::new(OptopulseScenario { inner }));
        Ok(())
    })
}

/// Releases a scenario handle. Null is ignored.
///
/// # Safety
/// `scenario` must come from [`optopulse_scenario_from_json`] and not have
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn optopulse_scenario_free(scenario: *mut OptopulseScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Normalized scenario document.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn optopulse_scenario_to_json(
    scenario: *const OptopulseScenario,
    out: *mut *mut c_char,
) -> OptopulseStatus {
    guard(|| {
        let sc = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        write_string(out, sc.inner.to_json())
    })
}

/// Runs the scenario's engine. `summary_json` receives the run summary and
/// `trajectory_csv`, if not null, the sampled trajectory.
///
/// # Safety
/// `scenario` must be a live handle; the output pointers must be valid for
/// writes or, for `trajectory_csv`, null.
#[no_mangle]
pub unsafe extern "C" fn optopulse_simulate(
    scenario: *const OptopulseScenario,
    summary_json: *mut *mut c_char,
    trajectory_csv: *mut *mut c_char,
) -> OptopulseStatus {
    guard(|| {
        let sc = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        if summary_json.is_null() {
            return Err(null("summary_json"));
        }
        let output = simulate(&sc.inner)?;
        write_string(summary_json, to_json(&output.summary)?)?;
        if !trajectory_csv.is_null() {
            let csv = String::from_utf8(output.trajectory_csv)
                .map_err(|e| Failure(OptopulseStatus::InvalidUtf8, e.to_string()))?;
            write_string(trajectory_csv, csv)?;
        }
        Ok(())
    })
}

/// Compiles the linear-regime sideband sequence for the parameters in
/// `params_json` (a `SystemParams` document in units of ν; null for the
/// defaults). `sideband` is 0 for red, 1 for blue; `compensation` is 0 for a
/// concurrent correction, 1 for a separate pulse.
///
/// # Safety
/// `params_json` must be null or NUL-terminated; `out` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn optopulse_compile_linear(
    params_json: *const c_char,
    g: f64,
    t1: f64,
    tf: f64,
    sideband: u32,
    compensation: u32,
    out: *mut *mut c_char,
) -> OptopulseStatus {
    guard(|| {
        let params: SystemParams = if params_json.is_null() {
            SystemParams::default()
        } else {
            serde_json::from_str(read_str(params_json, "params_json")?).map_err(Error::from)?
        };
        let sideband = match sideband {
            0 => Sideband::Red,
            1 => Sideband::Blue,
            v => return Err(Failure(OptopulseStatus::Domain, format!("unknown sideband {v}"))),
        };
        let compensation = match compensation {
            0 => Compensation::Concurrent,
            1 => Compensation::Separate,
            v => return Err(Failure(OptopulseStatus::Domain, format!("unknown compensation {v}"))),
        };
        let schedule = compile_linear_beamsplitter(&params, g, t1, tf, sideband, compensation)?;
        write_string(out, schedule.to_json())
    })
}

/// Single-photon coupling (rad/s) of the setup in `input_json`.
///
/// # Safety
/// `input_json` must be NUL-terminated; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn optopulse_derive_g0(input_json: *const c_char, out: *mut f64) -> OptopulseStatus {
    guard(|| {
        let input: FeasibilityInput = serde_json::from_str(read_str(input_json, "input_json")?).map_err(Error::from)?;
        write_f64(out, derive_g0(&input)?)
    })
}

/// Minimum drive strength in units of ν for coupling `g0` (units of ν).
/// `nonlinear` selects the double-cavity threshold.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn optopulse_pulse_power_requirement(g0: f64, nonlinear: bool, out: *mut f64) -> OptopulseStatus {
    guard(|| {
        let params = SystemParams {
            g0,
            ..Default::default()
        };
        let regime = if nonlinear { Regime::Nonlinear } else { Regime::Linear };
        write_f64(out, pulse_power_requirement(&params, regime)?)
    })
}

/// Feasibility table as a JSON array of `{name, value, unit, note}`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn optopulse_feasibility_table(out: *mut *mut c_char) -> OptopulseStatus {
    guard(|| write_string(out, to_json(&feasibility_table()?)?))
}
