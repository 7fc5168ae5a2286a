//! C ABI over the simulation library.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free` function. Every fallible call returns an
//! [`OlStatus`]; on failure [`ol_last_error`] describes the cause for the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::OnceLock;

use nalgebra::Vector3;
use outerloop::cli::presets::preset;
use outerloop::cli::validate::{run_checks, ValidateOptions};
use outerloop::model::PlantModel;
use outerloop::sim::{parse_scenario, run_scenario, Scenario, SimError, TrajectoryLog, COLUMNS};

/// Result codes. The first five match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OlStatus {
    Ok = 0,
    Config = 1,
    Controller = 2,
    Divergence = 3,
    Validation = 4,
    NullPointer = 5,
    Io = 6,
    Panic = 7,
}

/// A parsed, validated scenario.
pub struct OlScenario {
    inner: Scenario,
}

/// Logged rows of one run.
pub struct OlTrajectory {
    log: TrajectoryLog,
    values: Vec<Vec<f64>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: OlStatus, msg: impl Into<String>) -> OlStatus {
    set_error(msg);
    status
}

/// Run `f`, turning a panic into [`OlStatus::Panic`].
fn guarded(f: impl FnOnce() -> OlStatus) -> OlStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(OlStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, OlStatus> {
    if p.is_null() {
        return Err(fail(OlStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(OlStatus::Config, format!("{what} is not valid UTF-8")))
}

fn status_of(e: &SimError) -> OlStatus {
    match e {
        SimError::InvalidConfig(_) => OlStatus::Config,
        SimError::Controller { .. } => OlStatus::Controller,
        SimError::NumericalDivergence { .. } => OlStatus::Divergence,
    }
}

unsafe fn store_scenario(text: &str, name: &str, out: *mut *mut OlScenario) -> OlStatus {
    match parse_scenario(text, name) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(OlScenario { inner }));
            OlStatus::Ok
        }
        Err(e) => fail(OlStatus::Config, e.to_string()),
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ol_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parse a scenario from TOML text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ol_scenario_from_toml(
    text: *const c_char,
    out: *mut *mut OlScenario,
) -> OlStatus {
    guarded(|| {
        if out.is_null() {
            return fail(OlStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        match read_str(text, "text") {
            Ok(t) => store_scenario(t, "scenario", out),
            Err(s) => s,
        }
    })
}

/// Load a bundled preset by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ol_scenario_from_preset(
    name: *const c_char,
    out: *mut *mut OlScenario,
) -> OlStatus {
    guarded(|| {
        if out.is_null() {
            return fail(OlStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let name = match read_str(name, "name") {
            Ok(n) => n,
            Err(s) => return s,
        };
        match preset(name) {
            Some(text) => store_scenario(text, name, out),
            None => fail(OlStatus::Config, format!("unknown preset `{name}`")),
        }
    })
}

/// Override the simulated duration (s).
///
/// # Safety
/// `scenario` must come from this library and not be freed.
#[no_mangle]
pub unsafe extern "C" fn ol_scenario_set_duration(
    scenario: *mut OlScenario,
    duration: f64,
) -> OlStatus {
    guarded(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(OlStatus::NullPointer, "scenario is null");
        };
        let mut next = s.inner.clone();
        next.timing.duration = duration;
        match next.validate() {
            Ok(()) => {
                s.inner = next;
                OlStatus::Ok
            }
            Err(e) => fail(OlStatus::Config, e.to_string()),
        }
    })
}

/// Override the number of plant integration pieces per inner tick.
///
/// # Safety
/// `scenario` must come from this library and not be freed.
#[no_mangle]
pub unsafe extern "C" fn ol_scenario_set_plant_substeps(
    scenario: *mut OlScenario,
    substeps: usize,
) -> OlStatus {
    guarded(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(OlStatus::NullPointer, "scenario is null");
        };
        if substeps == 0 {
            return fail(OlStatus::Config, "plant substeps must be at least 1");
        }
        s.inner.timing.plant_substeps = substeps;
        OlStatus::Ok
    })
}

/// # Safety
/// `scenario` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn ol_scenario_free(scenario: *mut OlScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Run a scenario. On a controller error or divergence the rows logged
/// before the failure are still returned in `out`.
///
/// # Safety
/// `scenario` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ol_run(
    scenario: *const OlScenario,
    out: *mut *mut OlTrajectory,
) -> OlStatus {
    guarded(|| {
        if out.is_null() {
            return fail(OlStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(s) = scenario.as_ref() else {
            return fail(OlStatus::NullPointer, "scenario is null");
        };
        let (log, status) = match run_scenario(&s.inner) {
            Ok(log) => (log, OlStatus::Ok),
            Err(f) => {
                let status = fail(status_of(&f.error), f.error.to_string());
                (f.log, status)
            }
        };
        let values = log.rows.iter().map(|r| r.values()).collect();
        *out = Box::into_raw(Box::new(OlTrajectory { log, values }));
        status
    })
}

/// Number of logged rows; 0 for a null handle.
///
/// # Safety
/// `traj` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn ol_trajectory_rows(traj: *const OlTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.values.len())
}

/// Number of columns per row.
#[no_mangle]
pub extern "C" fn ol_trajectory_cols() -> usize {
    COLUMNS.len()
}

fn column_names() -> &'static [CString] {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    NAMES.get_or_init(|| {
        COLUMNS
            .iter()
            .map(|c| CString::new(*c).expect("column names have no NUL"))
            .collect()
    })
}

/// Static name of column `col`, or null when out of range.
#[no_mangle]
pub extern "C" fn ol_trajectory_column_name(col: usize) -> *const c_char {
    column_names().get(col).map_or(ptr::null(), |c| c.as_ptr())
}

/// Value at (`row`, `col`). `NaN` marks quantities that do not apply.
///
/// # Safety
/// `traj` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ol_trajectory_value(
    traj: *const OlTrajectory,
    row: usize,
    col: usize,
    out: *mut f64,
) -> OlStatus {
    guarded(|| {
        let (Some(t), false) = (traj.as_ref(), out.is_null()) else {
            return fail(OlStatus::NullPointer, "trajectory or out is null");
        };
        match t.values.get(row).and_then(|r| r.get(col)) {
            Some(v) => {
                *out = *v;
                OlStatus::Ok
            }
            None => fail(
                OlStatus::Config,
                format!("index ({row}, {col}) out of range"),
            ),
        }
    })
}

/// Write the trajectory as CSV, identical to the command-line output.
///
/// # Safety
/// `traj` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ol_trajectory_write_csv(
    traj: *const OlTrajectory,
    path: *const c_char,
) -> OlStatus {
    guarded(|| {
        let Some(t) = traj.as_ref() else {
            return fail(OlStatus::NullPointer, "trajectory is null");
        };
        let path = match read_str(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match std::fs::write(path, t.log.to_csv()) {
            Ok(()) => OlStatus::Ok,
            Err(e) => fail(OlStatus::Io, format!("{path}: {e}")),
        }
    })
}

/// # Safety
/// `traj` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn ol_trajectory_free(traj: *mut OlTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Tool position of the reference arm at joint angles `q[3]` (rad).
///
/// # Safety
/// `q` must point to 3 and `x_out` to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ol_forward_kinematics(q: *const f64, x_out: *mut f64) -> OlStatus {
    guarded(|| {
        if q.is_null() || x_out.is_null() {
            return fail(OlStatus::NullPointer, "q or x_out is null");
        }
        let q = Vector3::from_column_slice(std::slice::from_raw_parts(q, 3));
        let x = PlantModel::table_one().forward_kinematics(&q);
        std::slice::from_raw_parts_mut(x_out, 3).copy_from_slice(x.as_slice());
        OlStatus::Ok
    })
}

/// Link-side inertia matrix of the reference arm at `q[3]`, row-major
/// into `m_out[9]`.
///
/// # Safety
/// `q` must point to 3 and `m_out` to 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ol_link_mass_matrix(q: *const f64, m_out: *mut f64) -> OlStatus {
    guarded(|| {
        if q.is_null() || m_out.is_null() {
            return fail(OlStatus::NullPointer, "q or m_out is null");
        }
        let q = Vector3::from_column_slice(std::slice::from_raw_parts(q, 3));
        let m = PlantModel::table_one().link_mass_matrix(&q);
        let out = std::slice::from_raw_parts_mut(m_out, 9);
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] = m[(r, c)];
            }
        }
        OlStatus::Ok
    })
}

/// Run the self-checks whose name contains `filter` (all when null).
///
/// # Safety
/// `filter` must be NUL-terminated or null.
#[no_mangle]
pub unsafe extern "C" fn ol_validate(filter: *const c_char) -> OlStatus {
    guarded(|| {
        let filter = if filter.is_null() {
            None
        } else {
            match read_str(filter, "filter") {
                Ok(f) => Some(f.to_string()),
                Err(s) => return s,
            }
        };
        let checks = run_checks(&ValidateOptions {
            filter,
            perturb_dynamics: false,
        });
        match checks.iter().find(|c| !c.passed) {
            Some(c) => fail(OlStatus::Validation, format!("{}: {}", c.name, c.detail)),
            None if checks.is_empty() => fail(OlStatus::Validation, "no check matches the filter"),
            None => OlStatus::Ok,
        }
    })
}
