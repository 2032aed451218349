//! C ABI over the evtensor compiler and simulator.
//!
//! Every function returns an [`EtStatus`]; on failure the message is
//! available from [`et_last_error`] on the same thread. Objects are opaque
//! handles released with their `_free` function, and strings returned
//! through out-parameters are released with [`et_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use evtensor::kernel::CompiledKernel;
use evtensor::metrics::chrome_trace;
use evtensor::sched_dynamic::{lower_dynamic, DynamicOptions};
use evtensor::sched_static::{lower_static, worst_case_rewrite, StaticOptions};
use evtensor::sim::{simulate, simulate_barrier_baseline, SimConfig};
use evtensor::symshape::ShapeBinding;
use evtensor::trace::Trace;
use evtensor::workload_file::{builtin, KernelArtifact, WorkloadSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Simulation = 5,
    Panic = 6,
}

/// A workload: graph plus optional simulation and routing sections.
pub struct EtWorkload(WorkloadSpec);

/// A compiled kernel and the routing source needed to run it.
pub struct EtKernel(KernelArtifact);

pub struct EtTrace(Trace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(EtStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EtStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EtStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(EtStatus::NullArgument, "null string argument".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(EtStatus::InvalidUtf8, "string is not valid UTF-8".into()))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(EtStatus::NullArgument, "null handle".into()))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(EtStatus::NullArgument, "null out pointer".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(EtStatus::NullArgument, "null out pointer".into()));
    }
    *out = CString::new(s).map_err(|e| Fail(EtStatus::Parse, e.to_string()))?.into_raw();
    Ok(())
}

fn validation(e: impl std::fmt::Display) -> Fail {
    Fail(EtStatus::Validation, e.to_string())
}

fn parse_err(e: impl std::fmt::Display) -> Fail {
    Fail(EtStatus::Parse, e.to_string())
}

fn sim_err(e: evtensor::sim::SimError) -> Fail {
    let status = if e.is_validation() { EtStatus::Validation } else { EtStatus::Simulation };
    Fail(status, e.to_string())
}

unsafe fn sim_config(json: *const c_char, default_sms: usize) -> Result<SimConfig, Fail> {
    if json.is_null() {
        return Ok(SimConfig::with_sms(default_sms));
    }
    serde_json::from_str(text(json)?).map_err(parse_err)
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn et_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn et_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn et_workload_from_json(json: *const c_char, out: *mut *mut EtWorkload) -> EtStatus {
    guard(|| {
        let spec = WorkloadSpec::from_json(text(json)?).map_err(parse_err)?;
        put(out, EtWorkload(spec))
    })
}

/// Loads a built-in workload by name, e.g. `gemm_reduce_scatter`.
///
/// # Safety
/// `name` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn et_workload_builtin(name: *const c_char, out: *mut *mut EtWorkload) -> EtStatus {
    guard(|| {
        let spec = builtin(text(name)?).map_err(validation)?;
        put(out, EtWorkload(spec))
    })
}

/// # Safety
/// `w` must be a handle from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn et_workload_to_json(w: *const EtWorkload, out: *mut *mut c_char) -> EtStatus {
    guard(|| put_string(out, handle(w)?.0.to_json()))
}

/// # Safety
/// `w` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn et_workload_free(w: *mut EtWorkload) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Lowers to per-SM queues. `samples` is a `;`-separated list of shape
/// bindings (`n=1;n=2;n=4`), or empty for a graph without symbols.
/// Data-dependent edges are replaced by worst-case barriers first.
///
/// # Safety
/// `w` must be a handle; `samples` a valid C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn et_compile_static(
    w: *const EtWorkload,
    samples: *const c_char,
    num_sms: usize,
    out: *mut *mut EtKernel,
) -> EtStatus {
    guard(|| {
        let spec = &handle(w)?.0;
        let mut bindings: Vec<ShapeBinding> = text(samples)?
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(ShapeBinding::parse)
            .collect::<Result<_, _>>()
            .map_err(parse_err)?;
        if bindings.is_empty() {
            bindings.push(ShapeBinding::new());
        }
        let g = worst_case_rewrite(&spec.graph);
        let k = lower_static(&g, &bindings, num_sms, StaticOptions::default()).map_err(validation)?;
        put(out, EtKernel(KernelArtifact { kernel: k.into(), sim: spec.sim.clone(), routing: spec.routing.clone() }))
    })
}

/// # Safety
/// `w` must be a handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn et_compile_dynamic(w: *const EtWorkload, early_push: bool, out: *mut *mut EtKernel) -> EtStatus {
    guard(|| {
        let spec = &handle(w)?.0;
        let k = lower_dynamic(&spec.graph, DynamicOptions { early_push, ..Default::default() }).map_err(validation)?;
        put(out, EtKernel(KernelArtifact { kernel: k.into(), sim: spec.sim.clone(), routing: spec.routing.clone() }))
    })
}

/// # Safety
/// `json` must be a valid C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn et_kernel_from_json(json: *const c_char, out: *mut *mut EtKernel) -> EtStatus {
    guard(|| {
        let a = KernelArtifact::from_json(text(json)?).map_err(parse_err)?;
        put(out, EtKernel(a))
    })
}

/// # Safety
/// `k` must be a handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn et_kernel_to_json(k: *const EtKernel, out: *mut *mut c_char) -> EtStatus {
    guard(|| put_string(out, handle(k)?.0.to_json()))
}

/// # Safety
/// `k` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn et_kernel_free(k: *mut EtKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Simulates `k` for `binding` (e.g. `n=3`, or empty). `config_json` is a
/// simulation config object or null for defaults; `seed` overrides its seed.
///
/// # Safety
/// `k` must be a handle; strings valid or `config_json` null; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn et_simulate(
    k: *const EtKernel,
    binding: *const c_char,
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut EtTrace,
) -> EtStatus {
    guard(|| {
        let a = &handle(k)?.0;
        let b = ShapeBinding::parse(text(binding)?).map_err(parse_err)?;
        let default_sms = match &a.kernel {
            CompiledKernel::Static(s) => s.num_sms,
            CompiledKernel::Dynamic(_) => 4,
        };
        let mut cfg = sim_config(config_json, default_sms)?;
        cfg.seed = seed;
        let real = a.realize(&b, seed).map_err(validation)?;
        let t = simulate(&a.kernel, &b, real.as_ref(), &cfg).map_err(sim_err)?;
        put(out, EtTrace(t))
    })
}

/// Simulates the unfused barrier reference of a workload.
///
/// # Safety
/// As for [`et_simulate`].
#[no_mangle]
pub unsafe extern "C" fn et_simulate_baseline(
    w: *const EtWorkload,
    binding: *const c_char,
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut EtTrace,
) -> EtStatus {
    guard(|| {
        let spec = &handle(w)?.0;
        let b = ShapeBinding::parse(text(binding)?).map_err(parse_err)?;
        let mut cfg = sim_config(config_json, 4)?;
        cfg.seed = seed;
        let real = spec.realize(&b, seed).map_err(validation)?;
        let t = simulate_barrier_baseline(&spec.graph, &b, real.as_ref(), &cfg).map_err(sim_err)?;
        put(out, EtTrace(t))
    })
}

/// # Safety
/// `t` must be a handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn et_trace_makespan(t: *const EtTrace, out: *mut u64) -> EtStatus {
    guard(|| {
        let t = handle(t)?;
        if out.is_null() {
            return Err(Fail(EtStatus::NullArgument, "null out pointer".into()));
        }
        *out = t.0.makespan;
        Ok(())
    })
}

/// Trace-event JSON suitable for chrome://tracing or Perfetto.
///
/// # Safety
/// `t` must be a handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn et_trace_chrome_json(t: *const EtTrace, out: *mut *mut c_char) -> EtStatus {
    guard(|| put_string(out, chrome_trace(&handle(t)?.0).to_string()))
}

/// # Safety
/// `t` must be a handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn et_trace_to_json(t: *const EtTrace, out: *mut *mut c_char) -> EtStatus {
    guard(|| put_string(out, handle(t)?.0.to_json()))
}

/// # Safety
/// `t` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn et_trace_free(t: *mut EtTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}
