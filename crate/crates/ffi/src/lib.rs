//! C ABI over the natsim engines.
//!
//! Networks are opaque handles created by `nat_network_*` constructors and
//! released with `nat_network_free`. Every fallible call returns a
//! [`NatStatus`] and writes its result through an out-pointer; on failure the
//! message is available from `nat_last_error_message` on the same thread.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use natsim::fock::build_basis;
use natsim::lindblad::fock_transmission;
use natsim::moments::moment_transmission;
use natsim::{standard_four_site, validate_network, Error, InterferenceMode, NetworkSpec, ValidatedNetwork};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NatStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Malformed input: bad UTF-8, bad JSON, unknown mode.
    InvalidArgument = 2,
    /// The network or a parameter failed validation.
    Validation = 3,
    /// Numerical failure: singular or degenerate steady state, underflow.
    Solver = 4,
    /// The Fock space exceeds the dimension cap.
    Overflow = 5,
    /// An internal panic was caught.
    Panic = 6,
}

/// Interference mode of the four-site network.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NatMode {
    Constructive = 0,
    Destructive = 1,
}

/// Opaque validated network.
pub struct NatNetwork {
    inner: ValidatedNetwork,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> NatStatus {
    match e {
        Error::Overflow { .. } => NatStatus::Overflow,
        Error::Config(_) | Error::Json(_) | Error::Io(_) => NatStatus::InvalidArgument,
        e if e.exit_code() == 3 => NatStatus::Validation,
        _ => NatStatus::Solver,
    }
}

fn guard(f: impl FnOnce() -> Result<(), NatStatus>) -> NatStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NatStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            NatStatus::Panic
        }
    }
}

fn fail(e: Error) -> NatStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn null(what: &str) -> NatStatus {
    set_error(&format!("null pointer: {what}"));
    NatStatus::NullPointer
}

unsafe fn emit_network(spec: NetworkSpec, out: *mut *mut NatNetwork) -> Result<(), NatStatus> {
    let inner = validate_network(spec).map_err(fail)?;
    *out = Box::into_raw(Box::new(NatNetwork { inner }));
    Ok(())
}

/// Four-site network with disorder `omega2` and dephasing `gamma2` on site 2,
/// default couplings.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn nat_network_standard_four_site(
    mode: NatMode,
    omega2: f64,
    gamma2: f64,
    out: *mut *mut NatNetwork,
) -> NatStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = match mode {
            NatMode::Constructive => InterferenceMode::Constructive,
            NatMode::Destructive => InterferenceMode::Destructive,
        };
        let spec = standard_four_site(m, omega2, gamma2, None).map_err(fail)?;
        emit_network(spec, out)
    })
}

/// Network from a NUL-terminated JSON document.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nat_network_from_json(json: *const c_char, out: *mut *mut NatNetwork) -> NatStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| {
            set_error(&format!("json is not UTF-8: {e}"));
            NatStatus::InvalidArgument
        })?;
        let spec = NetworkSpec::from_json(text).map_err(fail)?;
        emit_network(spec, out)
    })
}

/// Number of sites of a network.
///
/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nat_network_n_sites(net: *const NatNetwork, out: *mut usize) -> NatStatus {
    guard(|| {
        if net.is_null() {
            return Err(null("net"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = (*net).inner.n_sites();
        Ok(())
    })
}

/// Release a handle; null is ignored.
///
/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nat_network_free(net: *mut NatNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Steady-state transmission from the truncated-Fock engine.
///
/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nat_transmission_fock(net: *const NatNetwork, cutoff: usize, out: *mut f64) -> NatStatus {
    guard(|| {
        if net.is_null() {
            return Err(null("net"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let n = &(*net).inner;
        build_basis(n.n_sites(), cutoff).map_err(fail)?;
        *out = fock_transmission(n, cutoff).map_err(fail)?;
        Ok(())
    })
}

/// Steady-state transmission from the second-moment engine.
///
/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nat_transmission_moments(net: *const NatNetwork, out: *mut f64) -> NatStatus {
    guard(|| {
        if net.is_null() {
            return Err(null("net"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = moment_transmission(&(*net).inner).map_err(fail)?;
        Ok(())
    })
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn nat_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nat_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version has no interior NUL"),
    };
    VERSION.as_ptr()
}
