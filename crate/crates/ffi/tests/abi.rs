use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use rgnn_lab_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    rgl_string_free(s);
    out
}

unsafe fn last_error() -> String {
    let p = rgl_last_error();
    assert!(!p.is_null());
    CStr::from_ptr(p).to_str().unwrap().to_string()
}

const EDGE: &str = r#"{"vertices":[{"id":"a","label":["1","0"]},{"id":"b","label":["0","0"]}],"edges":[["a","b"]]}"#;

#[test]
fn gallery_run_and_json_roundtrip() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(rgl_model_gallery(cstr("reach-red").as_ptr(), &mut m), RglStatus::Ok);
        assert_eq!(rgl_model_is_halting(m), 1);
        let mut json = ptr::null_mut();
        assert_eq!(rgl_model_to_json(m, &mut json), RglStatus::Ok);
        let json = take(json);
        let mut m2 = ptr::null_mut();
        assert_eq!(rgl_model_from_json(cstr(&json).as_ptr(), &mut m2), RglStatus::Ok);

        let mut g = ptr::null_mut();
        assert_eq!(rgl_graph_from_json(cstr(EDGE).as_ptr(), &mut g), RglStatus::Ok);
        assert_eq!(rgl_graph_vertex_count(g), 2);
        let mut out = ptr::null_mut();
        assert_eq!(rgl_run(m2, g, RglSemantics::Halting, 100, 0, &mut out), RglStatus::Ok);
        let summary: String = take(out);
        assert!(summary.contains(r#""certificate":"all-halted""#), "{summary}");
        assert!(summary.contains(r#""output":{"a":true,"b":true}"#), "{summary}");
        rgl_graph_free(g);
        rgl_model_free(m);
        rgl_model_free(m2);
    }
}

#[test]
fn budget_exhaustion_still_reports_a_summary() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(rgl_model_gallery(cstr("strict-counter").as_ptr(), &mut m), RglStatus::Ok);
        let mut g = ptr::null_mut();
        assert_eq!(rgl_graph_from_json(cstr(EDGE).as_ptr(), &mut g), RglStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(rgl_run(m, g, RglSemantics::Converging, 10, 0, &mut out), RglStatus::BudgetExhausted);
        assert!(take(out).contains("budget-exhausted"));
        rgl_graph_free(g);
        rgl_model_free(m);
    }
}

#[test]
fn transform_then_verify() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(rgl_model_gallery(cstr("reach-red").as_ptr(), &mut m), RglStatus::Ok);
        let mut c = ptr::null_mut();
        assert_eq!(
            rgl_transform(m, RglDirection::H2c, true, cstr("1").as_ptr(), &mut c),
            RglStatus::Ok
        );
        assert_eq!(rgl_model_is_halting(c), 0);
        let mut missing = ptr::null_mut();
        assert_eq!(
            rgl_transform(m, RglDirection::H2c, true, ptr::null(), &mut missing),
            RglStatus::InvalidModel
        );
        assert!(last_error().contains("bound"));

        let mut g = ptr::null_mut();
        assert_eq!(rgl_graph_from_json(cstr(EDGE).as_ptr(), &mut g), RglStatus::Ok);
        let (mut report, mut pass) = (ptr::null_mut(), false);
        assert_eq!(
            rgl_verify(m, g, true, cstr("1").as_ptr(), 100, &mut report, &mut pass),
            RglStatus::Ok
        );
        assert!(pass);
        assert!(take(report).contains("coherence-3"));
        rgl_graph_free(g);
        rgl_model_free(c);
        rgl_model_free(m);
    }
}

#[test]
fn bisim_entry_points() {
    let c6 = r#"{"vertices":[{"id":"0","label":["1"]},{"id":"1","label":["1"]},{"id":"2","label":["1"]},{"id":"3","label":["1"]},{"id":"4","label":["1"]},{"id":"5","label":["1"]}],"edges":[["0","1"],["1","2"],["2","3"],["3","4"],["4","5"],["5","0"]]}"#;
    let c3 = r#"{"vertices":[{"id":"0","label":["1"]},{"id":"1","label":["1"]},{"id":"2","label":["1"]}],"edges":[["0","1"],["1","2"],["2","0"]]}"#;
    let z = r#"{"pairs":[["0","0"],["1","1"],["2","2"],["3","0"],["4","1"],["5","2"]]}"#;
    unsafe {
        let (mut g, mut h) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(rgl_graph_from_json(cstr(c6).as_ptr(), &mut g), RglStatus::Ok);
        assert_eq!(rgl_graph_from_json(cstr(c3).as_ptr(), &mut h), RglStatus::Ok);
        let mut ok = false;
        assert_eq!(rgl_bisim_check(g, h, cstr(z).as_ptr(), &mut ok), RglStatus::Ok);
        assert!(ok);
        let mut out = ptr::null_mut();
        assert_eq!(rgl_bisim_coarsest(g, h, &mut out), RglStatus::Ok);
        let blocks = take(out);
        assert_eq!(blocks.matches('[').count(), 2, "{blocks}");
        let bad = r#"{"pairs":[["0","9"]]}"#;
        assert_eq!(rgl_bisim_check(g, h, cstr(bad).as_ptr(), &mut ok), RglStatus::Parse);
        rgl_graph_free(g);
        rgl_graph_free(h);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(rgl_model_gallery(ptr::null(), &mut m), RglStatus::NullPointer);
        assert_eq!(rgl_model_gallery(cstr("nope").as_ptr(), &mut m), RglStatus::UnknownName);
        assert!(last_error().contains("nope"));
        assert_eq!(rgl_model_from_json(cstr("{").as_ptr(), &mut m), RglStatus::Parse);
        assert_eq!(rgl_model_gallery(cstr("const-label").as_ptr(), ptr::null_mut()), RglStatus::NullPointer);
        assert_eq!(rgl_model_is_halting(ptr::null()), -1);
        rgl_model_free(ptr::null_mut());
        rgl_string_free(ptr::null_mut());
        assert_eq!(rgl_model_gallery(cstr("const-label").as_ptr(), &mut m), RglStatus::Ok);
        assert!(rgl_last_error().is_null());
        rgl_model_free(m);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/rgnn_lab.h");
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success());
}
