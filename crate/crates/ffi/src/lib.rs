//! C ABI for `rgnn-lab`.
//!
//! Models and graphs are opaque handles owned by the caller and released with
//! the matching `*_free`. Every fallible call returns an [`RglStatus`]; on
//! failure [`rgl_last_error`] describes the error. Strings handed out by the
//! library are released with [`rgl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rgnn_lab::bisim::{self, Relation};
use rgnn_lab::neural::Registry;
use rgnn_lab::transform::{self, with_provenance, Variant};
use rgnn_lab::{gallery, semantics, verify, Error, Graph, ModelFile, Rational};

/// Result of an FFI call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RglStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidModel = 4,
    NotSimple = 5,
    BudgetExhausted = 6,
    UnstableOutput = 7,
    UnknownName = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RglSemantics {
    Converging = 0,
    Halting = 1,
    OutputConverging = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RglDirection {
    C2h = 0,
    H2c = 1,
}

/// A loaded model.
pub struct RglModel {
    file: ModelFile,
}

/// A labelled graph.
pub struct RglGraph {
    graph: Graph,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(RglStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Parse(_) | Error::UnknownVertex(_) | Error::DuplicateVertex(_) | Error::Dimension { .. } => {
                RglStatus::Parse
            }
            Error::NotSimple(_) => RglStatus::NotSimple,
            Error::BudgetExhausted { .. } => RglStatus::BudgetExhausted,
            Error::UnstableOutputCycle { .. } => RglStatus::UnstableOutput,
            Error::UnknownGalleryEntry(_) => RglStatus::UnknownName,
            Error::Io(_) => RglStatus::Io,
            _ => RglStatus::InvalidModel,
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RglStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RglStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RglStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(RglStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RglStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(RglStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(RglStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| Fail(RglStatus::Parse, "output contains nul".into()))?;
    put(out, c.into_raw(), "out")
}

unsafe fn put_model(out: *mut *mut RglModel, file: ModelFile) -> Result<(), Fail> {
    put(out, Box::into_raw(Box::new(RglModel { file })), "out")
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on this thread.
#[no_mangle]
pub extern "C" fn rgl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rgl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rgl_model_from_json(json: *const c_char, out: *mut *mut RglModel) -> RglStatus {
    guard(|| {
        let file = ModelFile::from_json(str_arg(json, "json")?, &Registry::builtin())?;
        put_model(out, file)
    })
}

/// # Safety
/// `name` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rgl_model_gallery(name: *const c_char, out: *mut *mut RglModel) -> RglStatus {
    guard(|| {
        let e = gallery::get(str_arg(name, "name")?)?;
        put_model(out, e.file())
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rgl_model_to_json(model: *const RglModel, out: *mut *mut c_char) -> RglStatus {
    guard(|| put_string(out, ref_arg(model, "model")?.file.to_json()))
}

/// 1 for a halting model, 0 for a plain one, -1 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rgl_model_is_halting(model: *const RglModel) -> i32 {
    match model.as_ref() {
        Some(m) => i32::from(m.file.model.as_halting().is_some()),
        None => -1,
    }
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rgl_model_free(model: *mut RglModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rgl_graph_from_json(json: *const c_char, out: *mut *mut RglGraph) -> RglStatus {
    guard(|| {
        let graph = Graph::from_json(str_arg(json, "json")?)?;
        put(out, Box::into_raw(Box::new(RglGraph { graph })), "out")
    })
}

/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rgl_graph_to_json(graph: *const RglGraph, out: *mut *mut c_char) -> RglStatus {
    guard(|| put_string(out, ref_arg(graph, "graph")?.graph.to_json()))
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rgl_graph_vertex_count(graph: *const RglGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.len())
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rgl_graph_free(graph: *mut RglGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Runs `model` on `graph`; writes the summary `{"k","certificate","output"}`
/// to `out` even when the run exhausts its budget or has an unstable output
/// cycle, in which case the status says so.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rgl_run(
    model: *const RglModel,
    graph: *const RglGraph,
    semantics: RglSemantics,
    max_steps: usize,
    window: usize,
    out: *mut *mut c_char,
) -> RglStatus {
    let mut end = RglStatus::Ok;
    let status = guard(|| {
        let m = &ref_arg(model, "model")?.file.model;
        let g = &ref_arg(graph, "graph")?.graph;
        let r = m.base();
        let trace = match semantics {
            RglSemantics::Converging => semantics::trace_converging(r, g, max_steps, None)?,
            RglSemantics::OutputConverging => semantics::trace_output_converging(r, g, max_steps, window)?,
            RglSemantics::Halting => {
                let h = m
                    .as_halting()
                    .ok_or_else(|| Fail(RglStatus::InvalidModel, "halting semantics needs a halting model".into()))?;
                semantics::trace_halting(h, g, max_steps)?
            }
        };
        end = match trace.certificate {
            semantics::Certificate::BudgetExhausted => RglStatus::BudgetExhausted,
            semantics::Certificate::UnstableOutputCycle => RglStatus::UnstableOutput,
            _ => RglStatus::Ok,
        };
        put_string(out, semantics::run_summary(r, &trace)?.to_string())
    });
    if status == RglStatus::Ok && end != RglStatus::Ok {
        set_error(format!("run ended with status {end:?}"));
        return end;
    }
    status
}

/// Derives a model in the given direction. `bound` may be null unless
/// `simple` is set and the direction is h2c.
///
/// # Safety
/// `model` must be live; `bound` null or nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rgl_transform(
    model: *const RglModel,
    direction: RglDirection,
    simple: bool,
    bound: *const c_char,
    out: *mut *mut RglModel,
) -> RglStatus {
    guard(|| {
        let source = &ref_arg(model, "model")?.file.model;
        let variant = if simple { Variant::Simple } else { Variant::General };
        let bound: Option<Rational> = if bound.is_null() {
            None
        } else {
            Some(str_arg(bound, "bound")?.parse()?)
        };
        let file = match direction {
            RglDirection::C2h => {
                let h = if simple {
                    transform::to_halting_simple(source.base())?
                } else {
                    transform::to_halting(source.base())?
                };
                with_provenance(h, source, "c2h", variant, None)
            }
            RglDirection::H2c => {
                let h = source
                    .as_halting()
                    .ok_or_else(|| Fail(RglStatus::InvalidModel, "h2c needs a halting model".into()))?;
                let c = verify::compile(h, variant, bound.as_ref())?;
                with_provenance(c.derived, source, "h2c", variant, c.bound)
            }
        };
        put_model(out, file)
    })
}

/// Compiles the halting `model`, runs both sides on `graph` and writes the
/// report JSON to `out` and whether every check passed to `all_pass`.
///
/// # Safety
/// Handles must be live; `bound` null or nul-terminated; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn rgl_verify(
    model: *const RglModel,
    graph: *const RglGraph,
    simple: bool,
    bound: *const c_char,
    max_steps: usize,
    out: *mut *mut c_char,
    all_pass: *mut bool,
) -> RglStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.file.model;
        let g = &ref_arg(graph, "graph")?.graph;
        let h = m
            .as_halting()
            .ok_or_else(|| Fail(RglStatus::InvalidModel, "verify needs a halting model".into()))?;
        let bound: Option<Rational> = if bound.is_null() {
            None
        } else {
            Some(str_arg(bound, "bound")?.parse()?)
        };
        let variant = if simple { Variant::Simple } else { Variant::General };
        let v = verify::verify_on_graph(h, g, variant, bound.as_ref(), max_steps)?;
        put(all_pass, v.report.all_pass(), "all_pass")?;
        put_string(out, v.report.to_json())
    })
}

/// Checks a relation `{"pairs":[[u,v],…]}` between `g` and `h`.
///
/// # Safety
/// Handles must be live; `relation` nul-terminated; `ok` writable.
#[no_mangle]
pub unsafe extern "C" fn rgl_bisim_check(
    g: *const RglGraph,
    h: *const RglGraph,
    relation: *const c_char,
    ok: *mut bool,
) -> RglStatus {
    guard(|| {
        let (g, h) = (&ref_arg(g, "g")?.graph, &ref_arg(h, "h")?.graph);
        let z = Relation::from_json(str_arg(relation, "relation")?, g, h)?;
        put(ok, bisim::check_graded_bisimulation(g, h, &z).ok, "ok")
    })
}

/// Coarsest graded bisimulation on `g ⊎ h` as `{"blocks":[…]}`.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rgl_bisim_coarsest(g: *const RglGraph, h: *const RglGraph, out: *mut *mut c_char) -> RglStatus {
    guard(|| {
        let (g, h) = (&ref_arg(g, "g")?.graph, &ref_arg(h, "h")?.graph);
        let p = bisim::coarsest_graded_bisimulation(g, h)?;
        put_string(out, p.to_json(g, h))
    })
}
