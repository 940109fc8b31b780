//! C ABI for the rendezvous simulation library.
//!
//! Configurations are opaque handles created by [`hfo_config_default`] or
//! [`hfo_config_load`] and released with [`hfo_config_free`]. Every
//! fallible call returns an [`HfoStatus`]; on failure a human-readable
//! message is retrievable with [`hfo_last_error`] (thread-local, valid
//! until the next failing call on the same thread).

use std::cell::RefCell;
use std::ffi::{c_char, c_double, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use hfo_core::experiments::run_nominal;
use hfo_core::hybrid::simulate;
use hfo_core::objective::compute_constants_unchecked;
use hfo_core::{Error, ExperimentConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfoStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// The configuration could not be read or validated.
    Config = 3,
    /// An argument was out of range.
    InvalidArg = 4,
    /// The simulation or analysis failed at runtime.
    Runtime = 5,
    /// The configured stepsize is outside the contraction hypothesis.
    StepsizeInvalid = 6,
    /// A panic was caught at the FFI boundary.
    Panic = 7,
}

/// Opaque run configuration.
pub struct HfoConfig {
    inner: ExperimentConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> HfoStatus {
    match err {
        Error::Config(_) => HfoStatus::Config,
        Error::InvalidArg(_) => HfoStatus::InvalidArg,
        Error::StepsizeInvalid { .. } => HfoStatus::StepsizeInvalid,
        _ => HfoStatus::Runtime,
    }
}

fn fail(err: &Error) -> HfoStatus {
    set_last_error(&err.to_string());
    status_of(err)
}

fn guarded<F: FnOnce() -> HfoStatus>(f: F) -> HfoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("panic caught at the FFI boundary");
            HfoStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or a pointer previously returned by this library.
unsafe fn config_ref<'a>(ptr: *const HfoConfig) -> Option<&'a ExperimentConfig> {
    ptr.as_ref().map(|c| &c.inner)
}

/// Message describing the most recent failure on this thread. Never null;
/// empty when no failure has occurred. The pointer is invalidated by the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hfo_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Create the built-in reference configuration. Returns null only if
/// construction panics. Free with `hfo_config_free`.
#[no_mangle]
pub extern "C" fn hfo_config_default() -> *mut HfoConfig {
    match catch_unwind(ExperimentConfig::reference) {
        Ok(inner) => Box::into_raw(Box::new(HfoConfig { inner })),
        Err(_) => {
            set_last_error("panic while building the reference configuration");
            std::ptr::null_mut()
        }
    }
}

/// Load a configuration from a TOML file.
///
/// # Safety
/// `path` must point to a NUL-terminated string; `out` must be a valid
/// location to store the handle.
#[no_mangle]
pub unsafe extern "C" fn hfo_config_load(
    path: *const c_char,
    out: *mut *mut HfoConfig,
) -> HfoStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            set_last_error("hfo_config_load: null argument");
            return HfoStatus::NullPointer;
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_last_error("hfo_config_load: path is not valid UTF-8");
                return HfoStatus::Utf8;
            }
        };
        match ExperimentConfig::load(path) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(HfoConfig { inner }));
                HfoStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a configuration handle. Null is ignored.
///
/// # Safety
/// `cfg` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hfo_config_free(cfg: *mut HfoConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Override the run horizon, seconds.
///
/// # Safety
/// `cfg` must be a valid handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hfo_config_set_horizon(cfg: *mut HfoConfig, horizon: c_double) -> HfoStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_mut() else {
            set_last_error("hfo_config_set_horizon: null handle");
            return HfoStatus::NullPointer;
        };
        if !(horizon > 0.0 && horizon.is_finite()) {
            set_last_error("horizon must be positive and finite");
            return HfoStatus::InvalidArg;
        }
        cfg.inner.horizon = horizon;
        HfoStatus::Ok
    })
}

/// Override the analysis window used for the limiting error, seconds.
///
/// # Safety
/// `cfg` must be a valid handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hfo_config_set_window(cfg: *mut HfoConfig, window: c_double) -> HfoStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_mut() else {
            set_last_error("hfo_config_set_window: null handle");
            return HfoStatus::NullPointer;
        };
        if !(window > 0.0 && window.is_finite()) {
            set_last_error("window must be positive and finite");
            return HfoStatus::InvalidArg;
        }
        cfg.inner.window = window;
        HfoStatus::Ok
    })
}

/// Override the base seed.
///
/// # Safety
/// `cfg` must be a valid handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hfo_config_set_seed(cfg: *mut HfoConfig, seed: u64) -> HfoStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_mut() else {
            set_last_error("hfo_config_set_seed: null handle");
            return HfoStatus::NullPointer;
        };
        cfg.inner.seed = seed;
        HfoStatus::Ok
    })
}

/// Copy the synthesized feedback gain (3x6, row-major, 18 values) and the
/// closed-loop matrix (6x6, row-major, 36 values). Either output pointer
/// may be null to skip it.
///
/// # Safety
/// `cfg` must be a valid handle; non-null outputs must have the stated
/// capacity.
#[no_mangle]
pub unsafe extern "C" fn hfo_synthesize_gains(
    cfg: *const HfoConfig,
    k_out: *mut c_double,
    a_stab_out: *mut c_double,
) -> HfoStatus {
    guarded(|| {
        let Some(cfg) = config_ref(cfg) else {
            set_last_error("hfo_synthesize_gains: null handle");
            return HfoStatus::NullPointer;
        };
        if !k_out.is_null() {
            for i in 0..3 {
                for j in 0..6 {
                    *k_out.add(i * 6 + j) = cfg.plant.k[(i, j)];
                }
            }
        }
        if !a_stab_out.is_null() {
            for i in 0..6 {
                for j in 0..6 {
                    *a_stab_out.add(i * 6 + j) = cfg.plant.a_stab[(i, j)];
                }
            }
        }
        HfoStatus::Ok
    })
}

/// Report the gradient-iteration constants for the configured stepsize:
/// the curvature constant L, the per-step contraction factor q, and the
/// largest admissible stepsize. Values are always written; the return is
/// `Ok` only when the contraction hypothesis holds.
///
/// # Safety
/// `cfg` must be a valid handle; non-null outputs must point to doubles.
#[no_mangle]
pub unsafe extern "C" fn hfo_stepsize_constants(
    cfg: *const HfoConfig,
    l_out: *mut c_double,
    q_out: *mut c_double,
    gamma_max_out: *mut c_double,
) -> HfoStatus {
    guarded(|| {
        let Some(cfg) = config_ref(cfg) else {
            set_last_error("hfo_stepsize_constants: null handle");
            return HfoStatus::NullPointer;
        };
        let c = compute_constants_unchecked(&cfg.obj, &cfg.plant);
        if !l_out.is_null() {
            *l_out = c.l;
        }
        if !q_out.is_null() {
            *q_out = c.q;
        }
        if !gamma_max_out.is_null() {
            *gamma_max_out = c.gamma_max;
        }
        if cfg.constants.is_some() {
            HfoStatus::Ok
        } else {
            set_last_error(&format!(
                "stepsize {} is outside the contraction hypothesis (q = {}, max {})",
                cfg.obj.gamma, c.q, c.gamma_max
            ));
            HfoStatus::StepsizeInvalid
        }
    })
}

/// Simulate the unperturbed scenario and report the limiting rendezvous
/// error (meters) and the disturbance-reduction ratio against the
/// per-component amplitude (NaN when the disturbance has no amplitude).
/// Either output pointer may be null to skip it.
///
/// # Safety
/// `cfg` must be a valid handle; non-null outputs must point to doubles.
#[no_mangle]
pub unsafe extern "C" fn hfo_run_nominal(
    cfg: *const HfoConfig,
    asymptotic_err_out: *mut c_double,
    reduction_out: *mut c_double,
) -> HfoStatus {
    guarded(|| {
        let Some(cfg) = config_ref(cfg) else {
            set_last_error("hfo_run_nominal: null handle");
            return HfoStatus::NullPointer;
        };
        match run_nominal(cfg) {
            Ok(result) => {
                if !asymptotic_err_out.is_null() {
                    *asymptotic_err_out = result.outputs[0].record.asymptotic_err;
                }
                if !reduction_out.is_null() {
                    *reduction_out = result.reduction.map_or(f64::NAN, |(per_comp, _)| per_comp);
                }
                HfoStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Simulate the unperturbed scenario and write the trajectory CSV.
///
/// # Safety
/// `cfg` must be a valid handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hfo_simulate_csv(
    cfg: *const HfoConfig,
    path: *const c_char,
) -> HfoStatus {
    guarded(|| {
        let Some(cfg) = config_ref(cfg) else {
            set_last_error("hfo_simulate_csv: null handle");
            return HfoStatus::NullPointer;
        };
        if path.is_null() {
            set_last_error("hfo_simulate_csv: null path");
            return HfoStatus::NullPointer;
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_last_error("hfo_simulate_csv: path is not valid UTF-8");
                return HfoStatus::Utf8;
            }
        };
        let traj = match simulate(
            &cfg.init,
            cfg.horizon,
            &cfg.obj,
            &cfg.plant,
            &cfg.dist,
            &cfg.timers,
            None,
            &cfg.sim_options(),
        ) {
            Ok(t) => t,
            Err(e) => return fail(&e),
        };
        match traj.write_csv_path(path) {
            Ok(()) => HfoStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}
