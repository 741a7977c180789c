//! C interface to `pwduffing`.
//!
//! Every function returns a [`PwdStatus`]; results go through out-pointers. After a
//! non-OK status, `pwd_last_error` gives a message for the calling thread. Systems
//! are opaque handles released with `pwd_system_free`; strings returned by the
//! library are released with `pwd_string_free`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use pwduffing::analysis::{conjecture_report, radius_grid, ReportSettings, ReportTarget, Spacing};
use pwduffing::config::{RunConfig, SystemSpec};
use pwduffing::flow::{displacement, IntegrationSettings};
use pwduffing::melnikov::{m1_closed_form, m1_quadrature, m2_closed_form, m2_quadrature, EpsDerivative};
use pwduffing::{Error, LienardHarness, PerturbedSystem, ShapeFunction, ZonePartition};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwdStatus {
    Ok = 0,
    InvalidInput = 1,
    NumericalFailure = 2,
    NullPointer = 3,
    WrongSystemKind = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwdShape {
    Linear = 0,
    Cubic = 1,
    Polynomial = 2,
}

/// Closed-form first Melnikov function and its three pieces.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PwdMelnikovPieces {
    pub first_quarter: f64,
    pub middle_half: f64,
    pub last_quarter: f64,
    pub total: f64,
}

/// One displacement measurement, `d = p - h`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PwdDisplacement {
    pub r: f64,
    pub h: f64,
    pub epsilon: f64,
    pub p: f64,
    pub d: f64,
}

/// Opaque system handle.
pub struct PwdSystem {
    spec: SystemSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> PwdStatus {
    set_error(err.to_string());
    if err.is_input_error() {
        PwdStatus::InvalidInput
    } else {
        PwdStatus::NumericalFailure
    }
}

fn guard<F: FnOnce() -> PwdStatus>(f: F) -> PwdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            PwdStatus::Panic
        }
    }
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize) -> Option<&'a [f64]> {
    if len == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(p, len))
    }
}

fn null(name: &str) -> PwdStatus {
    set_error(format!("null pointer: {name}"));
    PwdStatus::NullPointer
}

unsafe fn family<'a>(sys: *const PwdSystem) -> Result<&'a PerturbedSystem, PwdStatus> {
    match sys.as_ref() {
        None => Err(null("system")),
        Some(PwdSystem { spec: SystemSpec::Family(s) }) => Ok(s),
        Some(_) => {
            set_error("operation needs a piecewise system, not a harness");
            Err(PwdStatus::WrongSystemKind)
        }
    }
}

fn boxed(spec: SystemSpec, out: *mut *mut PwdSystem) -> PwdStatus {
    unsafe { *out = Box::into_raw(Box::new(PwdSystem { spec })) };
    PwdStatus::Ok
}

/// Message for the last non-OK status on this thread, or NULL. Valid until the next
/// call into the library from the same thread; do not free.
#[no_mangle]
pub extern "C" fn pwd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a piecewise system. `shape` is a `PwdShape` value; `coefficients` (h' low
/// to high) is read only for `PWD_SHAPE_POLYNOMIAL`.
///
/// # Safety
/// Array arguments must point to at least the given number of doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pwd_system_new(
    breakpoints: *const f64,
    n_breakpoints: usize,
    slopes: *const f64,
    n_slopes: usize,
    shape: i32,
    coefficients: *const f64,
    n_coefficients: usize,
    strict_mode: bool,
    out: *mut *mut PwdSystem,
) -> PwdStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let (Some(a), Some(alpha)) = (slice_arg(breakpoints, n_breakpoints), slice_arg(slopes, n_slopes)) else {
            return null("breakpoints/slopes");
        };
        let shape = match shape {
            s if s == PwdShape::Linear as i32 => Ok(ShapeFunction::Linear),
            s if s == PwdShape::Cubic as i32 => Ok(ShapeFunction::Cubic),
            s if s == PwdShape::Polynomial as i32 => match slice_arg(coefficients, n_coefficients) {
                Some(c) => ShapeFunction::polynomial(c.to_vec()),
                None => return null("coefficients"),
            },
            other => {
                set_error(format!("unknown shape {other}"));
                return PwdStatus::InvalidInput;
            }
        };
        let built = shape.and_then(|shape| {
            ZonePartition::with_mode(a.to_vec(), alpha.to_vec(), strict_mode)
                .map(|p| PerturbedSystem::new(p, shape))
        });
        match built {
            Ok(s) => boxed(SystemSpec::Family(s), out),
            Err(e) => status_of(&e),
        }
    })
}

/// The van der Pol harness, `g2 = (1 - x^2) y`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pwd_system_new_van_der_pol(out: *mut *mut PwdSystem) -> PwdStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        boxed(SystemSpec::Harness(LienardHarness::van_der_pol()), out)
    })
}

/// Builds a system from configuration text (TOML, or JSON when `json` is true).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pwd_system_from_config(text: *const c_char, json: bool, out: *mut *mut PwdSystem) -> PwdStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return null("text/out");
        }
        let Ok(text) = CStr::from_ptr(text).to_str() else {
            set_error("configuration is not valid UTF-8");
            return PwdStatus::InvalidInput;
        };
        match RunConfig::parse(text, json) {
            Ok(cfg) => boxed(cfg.system, out),
            Err(e) => status_of(&e),
        }
    })
}

/// # Safety
/// `sys` must come from a constructor above and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn pwd_system_free(sys: *mut PwdSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Number of breakpoints `n` of a piecewise system.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pwd_breakpoint_count(sys: *const PwdSystem, out: *mut usize) -> PwdStatus {
    guard(|| match family(sys) {
        Err(s) => s,
        Ok(_) if out.is_null() => null("out"),
        Ok(s) => {
            *out = s.partition.n();
            PwdStatus::Ok
        }
    })
}

/// Zone `i` with `x` in `(a_i, a_{i+1}]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pwd_zone_index(sys: *const PwdSystem, x: f64, out: *mut usize) -> PwdStatus {
    guard(|| match family(sys) {
        Err(s) => s,
        Ok(_) if out.is_null() => null("out"),
        Ok(s) => match s.partition.zone_index(x) {
            Ok(z) => {
                *out = z;
                PwdStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pwd_eval_g(sys: *const PwdSystem, x: f64, y: f64, eps: f64, out: *mut f64) -> PwdStatus {
    guard(|| match family(sys) {
        Err(s) => s,
        Ok(_) if out.is_null() => null("out"),
        Ok(s) => match s.eval_g(x, y, eps) {
            Ok(v) => {
                *out = v;
                PwdStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    })
}

/// Writes `(dx/dt, dy/dt)` to `out[0..2]`.
///
/// # Safety
/// `out` must point to two doubles.
#[no_mangle]
pub unsafe extern "C" fn pwd_vector_field(sys: *const PwdSystem, x: f64, y: f64, eps: f64, out: *mut f64) -> PwdStatus {
    guard(|| match family(sys) {
        Err(s) => s,
        Ok(_) if out.is_null() => null("out"),
        Ok(s) => match s.vector_field([x, y], eps) {
            Ok(v) => {
                *out = v[0];
                *out.add(1) = v[1];
                PwdStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pwd_m1_closed_form(sys: *const PwdSystem, r: f64, out: *mut PwdMelnikovPieces) -> PwdStatus {
    guard(|| match family(sys) {
        Err(s) => s,
        Ok(_) if out.is_null() => null("out"),
        Ok(s) => match m1_closed_form(&s.partition, &s.shape, r) {
            Ok(p) => {
                *out = PwdMelnikovPieces {
                    first_quarter: p.first_quarter,
                    middle_half: p.middle_half,
                    last_quarter: p.last_quarter,
                    total: p.total,
                };
                PwdStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pwd_m1_quadrature(sys: *const PwdSystem, r: f64, tol: f64, out: *mut f64) -> PwdStatus {
    guard(|| match family(sys) {
        Err(s) => s,
        Ok(_) if out.is_null() => null("out"),
        Ok(s) => match m1_quadrature(s, r, tol) {
            Ok(v) => {
                *out = v;
                PwdStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    })
}

/// `pi r^2`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pwd_m2_closed_form(r: f64, out: *mut f64) -> PwdStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        match m2_closed_form(r) {
            Ok(v) => {
                *out = v;
                PwdStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pwd_m2_quadrature(sys: *const PwdSystem, r: f64, tol: f64, out: *mut f64) -> PwdStatus {
    guard(|| match family(sys) {
        Err(s) => s,
        Ok(_) if out.is_null() => null("out"),
        Ok(s) => match m2_quadrature(s, r, tol, EpsDerivative::Analytic) {
            Ok(v) => {
                *out = v;
                PwdStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    })
}

/// Displacement on the orbit of radius `r` with default integrator settings.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pwd_displacement(sys: *const PwdSystem, r: f64, eps: f64, out: *mut PwdDisplacement) -> PwdStatus {
    guard(|| match family(sys) {
        Err(s) => s,
        Ok(_) if out.is_null() => null("out"),
        Ok(s) => match displacement(s, r, eps, &IntegrationSettings::default()) {
            Ok(d) => {
                *out = PwdDisplacement {
                    r: d.r,
                    h: d.h,
                    epsilon: d.epsilon,
                    p: d.p,
                    d: d.d,
                };
                PwdStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    })
}

/// Evidence report as JSON over `r_count` linearly spaced radii in `[r_min, r_max]`.
/// An empty epsilon list gives Melnikov evidence only. Free the result with
/// `pwd_string_free`.
///
/// # Safety
/// `epsilons` must point to `n_epsilons` doubles; pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pwd_report_json(
    sys: *const PwdSystem,
    r_min: f64,
    r_max: f64,
    r_count: usize,
    epsilons: *const f64,
    n_epsilons: usize,
    out: *mut *mut c_char,
) -> PwdStatus {
    guard(|| {
        let Some(sys) = sys.as_ref() else {
            return null("system");
        };
        if out.is_null() {
            return null("out");
        }
        let Some(eps) = slice_arg(epsilons, n_epsilons) else {
            return null("epsilons");
        };
        let grid = match radius_grid(r_min, r_max, r_count, Spacing::Linear) {
            Ok(g) => g,
            Err(e) => return status_of(&e),
        };
        let settings = ReportSettings {
            r_grid: grid,
            epsilons: eps.to_vec(),
            ..ReportSettings::default()
        };
        let target = match &sys.spec {
            SystemSpec::Family(s) => ReportTarget::Family(s),
            SystemSpec::Harness(h) => ReportTarget::Harness(h),
        };
        match conjecture_report(target, &settings) {
            Ok(rep) => match CString::new(rep.to_json()) {
                Ok(s) => {
                    *out = s.into_raw();
                    PwdStatus::Ok
                }
                Err(_) => {
                    set_error("report contains NUL");
                    PwdStatus::Panic
                }
            },
            Err(e) => status_of(&e),
        }
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn pwd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
