//! C interface to the simulator: opaque handles, integer status codes, and a
//! thread-local last-error message. `include/macsim.h` is the committed
//! header; the build script regenerates it when cbindgen is available.
//!
//! Ownership is explicit: whatever a `*_new` or `*_csv` call hands out must
//! come back through the matching `*_free`. Handles are not thread-safe;
//! share nothing, or guard a handle with one lock.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use macsim::configfile::{apply_setting, ExperimentConfig};
use macsim::experiment::{csv_document, run_experiment, ResultRow};
use macsim::sim::{ProtocolKind, SimFault};
use macsim::traffic::Priority;

/// Experiment settings under construction. Opaque.
pub struct MacsimConfig {
    inner: ExperimentConfig,
}

/// Finished experiment: one row per (configuration, priority class). Opaque.
pub struct MacsimResults {
    rows: Vec<ResultRow>,
}

/// Result of every fallible call. Anything but `Ok` leaves a description in
/// `macsim_last_error`.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MacsimStatus {
    Ok = 0,
    /// Null handle, unknown key, or a value that failed to parse.
    InvalidArgument = 1,
    /// Settings rejected by cross-field validation.
    InvalidConfig = 2,
    /// The simulation faulted or panicked.
    RuntimeFault = 3,
    /// An internal audit (conservation, capacity, priority) tripped.
    SelfCheckFailed = 4,
}

#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MacsimProtocol {
    Bop = 0,
    Frog = 1,
}

#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MacsimPriority {
    Urgent = 0,
    Normal = 1,
}

/// One summary row. Statistics that do not exist (no deliveries, or a single
/// replication) are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MacsimRow {
    pub protocol: MacsimProtocol,
    pub priority: MacsimPriority,
    pub node_count: u32,
    /// Zero when fragmentation does not apply to the protocol.
    pub fragment_payload: u32,
    pub mean_delay_ms: f64,
    pub delay_ci_ms: f64,
    pub throughput_bps: f64,
    pub throughput_ci_bps: f64,
    pub delivered: u64,
    pub dropped: u64,
    pub collisions: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let stored = CString::new(message)
        .unwrap_or_else(|_| CString::new("error message contained a NUL byte").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(stored));
}

fn fail(status: MacsimStatus, message: String) -> MacsimStatus {
    set_error(message);
    status
}

fn null_arg(what: &str) -> MacsimStatus {
    fail(
        MacsimStatus::InvalidArgument,
        format!("{what} must not be null"),
    )
}

/// Most recent error message on this thread, or null if no call failed yet.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn macsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null(), |s| s.as_ptr())
    })
}

/// Creates a configuration holding the benchmark defaults.
/// Free with `macsim_config_free`.
#[no_mangle]
pub extern "C" fn macsim_config_new() -> *mut MacsimConfig {
    Box::into_raw(Box::new(MacsimConfig {
        inner: ExperimentConfig::default(),
    }))
}

/// Releases a configuration. Null is a no-op.
///
/// # Safety
/// `cfg` must have come from `macsim_config_new` and not been freed since.
#[no_mangle]
pub unsafe extern "C" fn macsim_config_free(cfg: *mut MacsimConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn utf8_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, MacsimStatus> {
    if ptr.is_null() {
        return Err(null_arg(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        fail(
            MacsimStatus::InvalidArgument,
            format!("{what} must be valid UTF-8"),
        )
    })
}

/// Sets one field by its configuration-file key, for example
/// `macsim_config_set(cfg, "node_count", "11")`. Later writes win.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn macsim_config_set(
    cfg: *mut MacsimConfig,
    key: *const c_char,
    value: *const c_char,
) -> MacsimStatus {
    if cfg.is_null() {
        return null_arg("cfg");
    }
    let (key, value) = match (utf8_arg(key, "key"), utf8_arg(value, "value")) {
        (Ok(k), Ok(v)) => (k, v),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    match apply_setting(&mut (*cfg).inner, key, value) {
        Ok(()) => MacsimStatus::Ok,
        Err(m) => fail(MacsimStatus::InvalidArgument, m),
    }
}

fn to_row(r: &ResultRow) -> MacsimRow {
    let s = &r.summary;
    MacsimRow {
        protocol: match r.protocol {
            ProtocolKind::Bop => MacsimProtocol::Bop,
            ProtocolKind::Frog => MacsimProtocol::Frog,
        },
        priority: match r.priority {
            Priority::Urgent => MacsimPriority::Urgent,
            Priority::Normal => MacsimPriority::Normal,
        },
        node_count: r.node_count,
        fragment_payload: r.fragment_payload,
        mean_delay_ms: s.mean_delay_ms.unwrap_or(f64::NAN),
        delay_ci_ms: s.delay_ci_ms.unwrap_or(f64::NAN),
        throughput_bps: s.throughput_bps,
        throughput_ci_bps: s.throughput_ci_bps.unwrap_or(f64::NAN),
        delivered: s.delivered,
        dropped: s.dropped,
        collisions: s.collisions,
    }
}

/// Runs the configured replications and hands back a results handle through
/// `out`. On any failure `*out` is untouched. Free with
/// `macsim_results_free`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn macsim_run(
    cfg: *const MacsimConfig,
    out: *mut *mut MacsimResults,
) -> MacsimStatus {
    if cfg.is_null() {
        return null_arg("cfg");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let inner = &(*cfg).inner;
    if let Err(m) = inner.validate() {
        return fail(MacsimStatus::InvalidConfig, m);
    }
    // A panic must not unwind across the C boundary.
    let outcome = catch_unwind(AssertUnwindSafe(|| run_experiment(inner)));
    match outcome {
        Ok(Ok(rows)) => {
            *out = Box::into_raw(Box::new(MacsimResults { rows }));
            MacsimStatus::Ok
        }
        Ok(Err(fault)) => {
            let status = match fault {
                SimFault::Internal(_) => MacsimStatus::RuntimeFault,
                SimFault::SelfCheck(_) => MacsimStatus::SelfCheckFailed,
            };
            fail(status, fault.to_string())
        }
        Err(_) => fail(
            MacsimStatus::RuntimeFault,
            "panic inside the simulator".into(),
        ),
    }
}

/// Number of rows in a results handle; zero for null.
///
/// # Safety
/// `results` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn macsim_results_len(results: *const MacsimResults) -> usize {
    if results.is_null() {
        0
    } else {
        (&(*results).rows).len()
    }
}

/// Copies row `index` into `*row`.
///
/// # Safety
/// `results` must be a live handle; `row` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn macsim_results_row(
    results: *const MacsimResults,
    index: usize,
    row: *mut MacsimRow,
) -> MacsimStatus {
    if results.is_null() {
        return null_arg("results");
    }
    if row.is_null() {
        return null_arg("row");
    }
    let rows = &(*results).rows;
    match rows.get(index) {
        Some(r) => {
            *row = to_row(r);
            MacsimStatus::Ok
        }
        None => fail(
            MacsimStatus::InvalidArgument,
            format!("row {index} out of range ({} rows)", rows.len()),
        ),
    }
}

/// Renders the results as the CSV document the command-line tool emits.
/// Returns a heap string to release with `macsim_string_free`, or null for a
/// null handle.
///
/// # Safety
/// `results` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn macsim_results_csv(results: *const MacsimResults) -> *mut c_char {
    if results.is_null() {
        set_error("results must not be null".into());
        return ptr::null_mut();
    }
    let doc = csv_document(&(*results).rows);
    // CSV bytes are digits, letters, commas, and newlines; no NUL possible.
    CString::new(doc).expect("CSV contains no NUL").into_raw()
}

/// Releases a string from `macsim_results_csv`. Null is a no-op.
///
/// # Safety
/// `s` must have come from this library and not been freed since.
#[no_mangle]
pub unsafe extern "C" fn macsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Releases a results handle. Null is a no-op.
///
/// # Safety
/// `results` must have come from `macsim_run` and not been freed since.
#[no_mangle]
pub unsafe extern "C" fn macsim_results_free(results: *mut MacsimResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}
