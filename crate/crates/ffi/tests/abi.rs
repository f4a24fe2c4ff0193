use std::ffi::{CStr, CString};
use std::ptr;

use optopulse_ffi::*;

fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { optopulse_string_free(s) };
    out
}

fn last_error() -> String {
    let p = optopulse_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

#[test]
fn scenario_roundtrip_and_simulation() {
    let json =
        CString::new(r#"{"time_budget": 1.0, "initial": {"cavity": {"thermal": 0.0}, "mechanics": {"thermal": 2.0}}}"#)
            .unwrap();
    let mut sc = ptr::null_mut();
    let status = unsafe { optopulse_scenario_from_json(json.as_ptr(), ptr::null(), &mut sc) };
    assert_eq!(status, OptopulseStatus::Ok, "{}", last_error());

    let mut doc = ptr::null_mut();
    assert_eq!(unsafe { optopulse_scenario_to_json(sc, &mut doc) }, OptopulseStatus::Ok);
    assert!(take(doc).contains("time_budget"));

    let (mut summary, mut csv) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(
        unsafe { optopulse_simulate(sc, &mut summary, &mut csv) },
        OptopulseStatus::Ok
    );
    let summary: serde_json::Value = serde_json::from_str(&take(summary)).unwrap();
    assert!((summary["final_phonon_number"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!(take(csv).starts_with("t,"));
    unsafe { optopulse_scenario_free(sc) };
}

#[test]
fn schema_errors_are_reported() {
    let json = CString::new(r#"{"time_budget": 1.0, "bogus": 3}"#).unwrap();
    let mut sc = ptr::null_mut();
    let status = unsafe { optopulse_scenario_from_json(json.as_ptr(), ptr::null(), &mut sc) };
    assert_eq!(status, OptopulseStatus::Schema);
    assert!(sc.is_null());
    assert!(last_error().contains("bogus"));
}

#[test]
fn null_pointers_are_rejected() {
    let mut sc = ptr::null_mut();
    assert_eq!(
        unsafe { optopulse_scenario_from_json(ptr::null(), ptr::null(), &mut sc) },
        OptopulseStatus::NullPointer
    );
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { optopulse_simulate(ptr::null(), &mut out, ptr::null_mut()) },
        OptopulseStatus::NullPointer
    );
    unsafe {
        optopulse_string_free(ptr::null_mut());
        optopulse_scenario_free(ptr::null_mut());
    }
}

#[test]
fn compile_linear_schedule() {
    let mut out = ptr::null_mut();
    let status = unsafe { optopulse_compile_linear(ptr::null(), 100.0, 0.001, 0.1, 0, 0, &mut out) };
    assert_eq!(status, OptopulseStatus::Ok);
    let doc: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(doc["segments"].as_array().unwrap().len(), 3);

    let status = unsafe { optopulse_compile_linear(ptr::null(), 100.0, -1.0, 0.1, 0, 0, &mut out) };
    assert_eq!(status, OptopulseStatus::Domain);
    let status = unsafe { optopulse_compile_linear(ptr::null(), 100.0, 0.001, 0.1, 7, 0, &mut out) };
    assert_eq!(status, OptopulseStatus::Domain);
}

#[test]
fn feasibility_numbers() {
    let input = CString::new(
        r#"{"nu_si": 6283185.307179586, "m_eff": 5e-11, "cavity_length": 0.01, "wavelength": 1.064e-6,
            "kappa_si": 4712388.98, "q_factor": 2e4, "T_env": 1.0}"#,
    )
    .unwrap();
    let mut g0 = 0.0;
    assert_eq!(
        unsafe { optopulse_derive_g0(input.as_ptr(), &mut g0) },
        OptopulseStatus::Ok
    );
    assert!((g0 - 75.0).abs() < 7.5);

    let mut omega = 0.0;
    assert_eq!(
        unsafe { optopulse_pulse_power_requirement(1.0, true, &mut omega) },
        OptopulseStatus::Ok
    );
    assert_eq!(omega, 100.0);
    assert_eq!(
        unsafe { optopulse_pulse_power_requirement(0.0, false, &mut omega) },
        OptopulseStatus::Precondition
    );

    let mut table = ptr::null_mut();
    assert_eq!(unsafe { optopulse_feasibility_table(&mut table) }, OptopulseStatus::Ok);
    let rows: serde_json::Value = serde_json::from_str(&take(table)).unwrap();
    assert!(rows.as_array().unwrap().iter().any(|r| r["name"] == "g0_membrane"));
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(optopulse_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/optopulse.h");
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler available, skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
