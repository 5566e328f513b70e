//! C ABI over `ddr-core`.
//!
//! Objects are handed out as opaque pointers and released with the matching
//! `*_free` function. Every fallible call returns a [`DdrStatus`]; on failure
//! [`ddr_last_error_message`] describes the problem for the calling thread.
//! Constraints are passed as a JSON object of slot to value strings.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ddr_core::env::{compute_reward, Outcome, OutcomeReason};
use ddr_core::kb::{self, BestSlot, Constraints, KbTable};
use ddr_core::policy::checkpoint::Checkpoint;
use ddr_core::policy::network::QNetwork;
use ddr_core::DdrError;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    UnknownSlot = 4,
    EmptyMatch = 5,
    Precondition = 6,
    Shape = 7,
    Io = 8,
    Checkpoint = 9,
    BufferTooSmall = 10,
    Internal = 11,
}

/// Terminal status passed to [`ddr_compute_reward`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdrOutcome {
    Ongoing = 0,
    Success = 1,
    Failure = 2,
}

/// Opaque task database.
pub struct DdrTable(KbTable);

/// Opaque Q-network.
pub struct DdrNetwork(QNetwork);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &DdrError) -> DdrStatus {
    match e {
        DdrError::Parse(_) | DdrError::Json(_) | DdrError::Csv(_) | DdrError::Schema(_) => DdrStatus::Parse,
        DdrError::UnknownSlot(_) => DdrStatus::UnknownSlot,
        DdrError::EmptyMatch => DdrStatus::EmptyMatch,
        DdrError::Shape { .. } => DdrStatus::Shape,
        DdrError::Io(_) => DdrStatus::Io,
        DdrError::Checkpoint(_) => DdrStatus::Checkpoint,
        _ => DdrStatus::Precondition,
    }
}

struct Fail(DdrStatus, String);

impl From<DdrError> for Fail {
    fn from(e: DdrError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DdrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DdrStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            DdrStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(DdrStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DdrStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(DdrStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(DdrStatus::NullPointer, format!("{what} is null")))
}

fn parse_constraints(json: &str) -> Result<Constraints, Fail> {
    serde_json::from_str(json).map_err(|e| Fail(DdrStatus::Parse, format!("constraints: {e}")))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ddr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads a table from a `.json` or `.csv` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ddr_table_load(path: *const c_char, out: *mut *mut DdrTable) -> DdrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let table = KbTable::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(DdrTable(table)));
        Ok(())
    })
}

/// Parses a table from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ddr_table_from_json(json: *const c_char, out: *mut *mut DdrTable) -> DdrStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(DdrTable(KbTable::from_json_str(json)?)));
        Ok(())
    })
}

/// # Safety
/// `table` must come from a `ddr_table_*` constructor and not be used after.
#[no_mangle]
pub unsafe extern "C" fn ddr_table_free(table: *mut DdrTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Number of entries.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddr_table_len(table: *const DdrTable, out: *mut usize) -> DdrStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(table, "table")?.0.len();
        Ok(())
    })
}

/// Entries matching the constraints.
///
/// # Safety
/// Pointers must be valid; `constraints_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ddr_match_count(
    table: *const DdrTable,
    constraints_json: *const c_char,
    out: *mut usize,
) -> DdrStatus {
    guard(|| {
        let table = &ref_arg(table, "table")?.0;
        let c = parse_constraints(str_arg(constraints_json, "constraints")?)?;
        *out_arg(out, "out")? = kb::match_count(table, &c)?;
        Ok(())
    })
}

/// Information gain in bits of requesting `slot`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ddr_information_gain(
    table: *const DdrTable,
    constraints_json: *const c_char,
    slot: *const c_char,
    out: *mut f64,
) -> DdrStatus {
    guard(|| {
        let table = &ref_arg(table, "table")?.0;
        let c = parse_constraints(str_arg(constraints_json, "constraints")?)?;
        let slot = str_arg(slot, "slot")?;
        *out_arg(out, "out")? = kb::information_gain(table, &c, slot)?;
        Ok(())
    })
}

/// Writes the most informative unconstrained slot into `buf` as a
/// NUL-terminated string, or an empty string when no slot is informative.
///
/// # Safety
/// `buf` must hold `buf_len` bytes; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddr_best_request_slot(
    table: *const DdrTable,
    constraints_json: *const c_char,
    buf: *mut c_char,
    buf_len: usize,
) -> DdrStatus {
    guard(|| {
        let table = &ref_arg(table, "table")?.0;
        let c = parse_constraints(str_arg(constraints_json, "constraints")?)?;
        if buf.is_null() {
            return Err(Fail(DdrStatus::NullPointer, "buf is null".into()));
        }
        let name = match kb::best_request_slot(table, &c)? {
            BestSlot::Slot(s) => s,
            BestSlot::NoInformativeSlot => String::new(),
        };
        if name.len() + 1 > buf_len {
            return Err(Fail(
                DdrStatus::BufferTooSmall,
                format!("need {} bytes", name.len() + 1),
            ));
        }
        std::ptr::copy_nonoverlapping(name.as_ptr(), buf.cast::<u8>(), name.len());
        *buf.add(name.len()) = 0;
        Ok(())
    })
}

/// True on the transition into the first dead-end state.
#[no_mangle]
pub extern "C" fn ddr_detect_dead_end(prev_n: usize, new_n: usize) -> bool {
    ddr_core::ddr::detect_dead_end(prev_n, new_n)
}

/// Terminal bonus or per-turn cost for `outcome` with a turn limit.
#[no_mangle]
pub extern "C" fn ddr_compute_reward(outcome: DdrOutcome, max_turns: usize) -> f64 {
    let o = match outcome {
        DdrOutcome::Ongoing => Outcome::ONGOING,
        DdrOutcome::Success => Outcome::success(),
        DdrOutcome::Failure => Outcome::failure(OutcomeReason::MaxTurns),
    };
    compute_reward(o, max_turns)
}

/// Loads the network from a checkpoint file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ddr_network_load(path: *const c_char, out: *mut *mut DdrNetwork) -> DdrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let net = Checkpoint::load(Path::new(path))?.network()?;
        *out = Box::into_raw(Box::new(DdrNetwork(net)));
        Ok(())
    })
}

/// # Safety
/// `net` must come from [`ddr_network_load`] and not be used after.
#[no_mangle]
pub unsafe extern "C" fn ddr_network_free(net: *mut DdrNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input and output sizes.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddr_network_dims(
    net: *const DdrNetwork,
    input_dim: *mut usize,
    output_dim: *mut usize,
) -> DdrStatus {
    guard(|| {
        let net = &ref_arg(net, "net")?.0;
        *out_arg(input_dim, "input_dim")? = net.input_dim();
        *out_arg(output_dim, "output_dim")? = net.output_dim();
        Ok(())
    })
}

/// Q-values for one state vector.
///
/// # Safety
/// `state` must hold `state_len` values and `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn ddr_q_forward(
    net: *const DdrNetwork,
    state: *const f64,
    state_len: usize,
    out: *mut f64,
    out_len: usize,
) -> DdrStatus {
    guard(|| {
        let net = &ref_arg(net, "net")?.0;
        if state.is_null() || out.is_null() {
            return Err(Fail(DdrStatus::NullPointer, "state or out is null".into()));
        }
        if out_len < net.output_dim() {
            return Err(Fail(
                DdrStatus::BufferTooSmall,
                format!("need {} output values", net.output_dim()),
            ));
        }
        let x = std::slice::from_raw_parts(state, state_len);
        let q = net.forward(x)?;
        std::slice::from_raw_parts_mut(out, q.len()).copy_from_slice(&q);
        Ok(())
    })
}
