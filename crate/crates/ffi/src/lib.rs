//! C ABI over the scri-scatter core: opaque handles, status codes and a
//! thread-local last-error message.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString, OsString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use scri_scatter::config::RunConfig;
use scri_scatter::energy;
use scri_scatter::error::Error;
use scri_scatter::nullgrid::ScriProfile;
use scri_scatter::scatter::{self, SigmaData};

/// Status returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriStatus {
    Ok = 0,
    Domain = 1,
    Config = 2,
    WorldtubeContamination = 3,
    BoundaryContamination = 4,
    NonlinearDivergence = 5,
    NoContraction = 6,
    CflViolation = 7,
    ConeOutsideDomain = 8,
    FoliationOutsideDomain = 9,
    ExtractionInconsistency = 10,
    NonFinite = 11,
    Io = 12,
    NullPointer = 100,
    InvalidUtf8 = 101,
    BufferTooSmall = 102,
    Panic = 103,
}

impl From<&Error> for ScriStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => ScriStatus::Domain,
            Error::Config(_) => ScriStatus::Config,
            Error::WorldtubeContamination { .. } => ScriStatus::WorldtubeContamination,
            Error::BoundaryContamination { .. } => ScriStatus::BoundaryContamination,
            Error::NonlinearDivergence { .. } => ScriStatus::NonlinearDivergence,
            Error::NoContraction { .. } => ScriStatus::NoContraction,
            Error::CflViolation { .. } => ScriStatus::CflViolation,
            Error::ConeOutsideDomain(_) => ScriStatus::ConeOutsideDomain,
            Error::FoliationOutsideDomain(_) => ScriStatus::FoliationOutsideDomain,
            Error::ExtractionInconsistency { .. } => ScriStatus::ExtractionInconsistency,
            Error::NonFinite(_) => ScriStatus::NonFinite,
            Error::Io(_) => ScriStatus::Io,
        }
    }
}

/// Run configuration (chart, grid, coefficient b, tolerances).
pub struct ScriConfig(RunConfig);

/// Mode profile on the scri lattice.
pub struct ScriProfileHandle(ScriProfile);

/// Mode data on the t = 0 slice.
pub struct ScriSigma(SigmaData);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: ScriStatus, msg: impl Into<String>) -> ScriStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> ScriStatus) -> ScriStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(ScriStatus::Panic, "panic inside scri-scatter"),
    }
}

fn from_core<T>(r: scri_scatter::error::Result<T>, out: impl FnOnce(T)) -> ScriStatus {
    match r {
        Ok(v) => {
            out(v);
            ScriStatus::Ok
        }
        Err(e) => fail(ScriStatus::from(&e), e.to_string()),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, ScriStatus> {
    if p.is_null() {
        return Err(fail(ScriStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(ScriStatus::InvalidUtf8, "string argument is not UTF-8"))
}

/// Message of the last failure on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn scri_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Default configuration.
#[no_mangle]
pub extern "C" fn scri_config_default() -> *mut ScriConfig {
    Box::into_raw(Box::new(ScriConfig(RunConfig::default())))
}

/// Parses INI text into a validated configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scri_config_from_ini(text: *const c_char, out: *mut *mut ScriConfig) -> ScriStatus {
    guard(|| {
        if out.is_null() {
            return fail(ScriStatus::NullPointer, "null output pointer");
        }
        let text = match str_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let r = RunConfig::from_ini_str(text).and_then(|c| c.validate().map(|_| c));
        from_core(r, |c| *out = Box::into_raw(Box::new(ScriConfig(c))))
    })
}

/// # Safety
/// `cfg` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn scri_config_free(cfg: *mut ScriConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// The configured scri data profile.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn scri_config_scri_data(cfg: *const ScriConfig, out: *mut *mut ScriProfileHandle) -> ScriStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            return fail(ScriStatus::NullPointer, "null argument");
        }
        from_core((*cfg).0.scri_data(), |p| *out = Box::into_raw(Box::new(ScriProfileHandle(p))))
    })
}

/// Profile from `n` samples starting at `u0` with spacing `du` and declared
/// support `[support_lo, support_hi]`.
///
/// # Safety
/// `values` must point to `n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn scri_profile_new(
    l: u32,
    u0: f64,
    du: f64,
    values: *const f64,
    n: usize,
    support_lo: f64,
    support_hi: f64,
    out: *mut *mut ScriProfileHandle,
) -> ScriStatus {
    guard(|| {
        if values.is_null() || out.is_null() {
            return fail(ScriStatus::NullPointer, "null argument");
        }
        let v = std::slice::from_raw_parts(values, n).to_vec();
        from_core(ScriProfile::new(l, u0, du, v, (support_lo, support_hi)), |p| {
            *out = Box::into_raw(Box::new(ScriProfileHandle(p)))
        })
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `p` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn scri_profile_len(p: *const ScriProfileHandle) -> usize {
    p.as_ref().map_or(0, |p| p.0.len())
}

/// Copies the samples into `buf` of capacity `cap`.
///
/// # Safety
/// `p` must be a live handle and `buf` writable for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn scri_profile_values(p: *const ScriProfileHandle, buf: *mut f64, cap: usize) -> ScriStatus {
    guard(|| {
        let Some(p) = p.as_ref() else { return fail(ScriStatus::NullPointer, "null handle") };
        if buf.is_null() {
            return fail(ScriStatus::NullPointer, "null buffer");
        }
        if cap < p.0.len() {
            return fail(ScriStatus::BufferTooSmall, format!("need {} doubles", p.0.len()));
        }
        ptr::copy_nonoverlapping(p.0.values.as_ptr(), buf, p.0.len());
        ScriStatus::Ok
    })
}

/// H1 norm on scri.
///
/// # Safety
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn scri_profile_h1(p: *const ScriProfileHandle, out: *mut f64) -> ScriStatus {
    guard(|| {
        let Some(p) = p.as_ref() else { return fail(ScriStatus::NullPointer, "null handle") };
        if out.is_null() {
            return fail(ScriStatus::NullPointer, "null output pointer");
        }
        *out = energy::h1_scri_norm(&p.0);
        ScriStatus::Ok
    })
}

/// # Safety
/// `p` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn scri_profile_free(p: *mut ScriProfileHandle) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

type ProfileMap = fn(&ScriProfile, &scri_scatter::coeff::CoeffB, &scatter::ScatterSetup) -> scri_scatter::error::Result<ScriProfile>;

unsafe fn apply_profile_map(
    cfg: *const ScriConfig,
    theta: *const ScriProfileHandle,
    out: *mut *mut ScriProfileHandle,
    f: ProfileMap,
) -> ScriStatus {
    guard(|| {
        if cfg.is_null() || theta.is_null() || out.is_null() {
            return fail(ScriStatus::NullPointer, "null argument");
        }
        let c = &(*cfg).0;
        from_core(f(&(*theta).0, &c.coeff_b(), &c.scatter()), |p| *out = Box::into_raw(Box::new(ScriProfileHandle(p))))
    })
}

/// Scattering operator from past scri data to future scri data.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn scri_scattering_operator(
    cfg: *const ScriConfig,
    theta_minus: *const ScriProfileHandle,
    out: *mut *mut ScriProfileHandle,
) -> ScriStatus {
    apply_profile_map(cfg, theta_minus, out, scatter::scattering_operator)
}

/// Inverse scattering operator.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn scri_scattering_inverse(
    cfg: *const ScriConfig,
    theta_plus: *const ScriProfileHandle,
    out: *mut *mut ScriProfileHandle,
) -> ScriStatus {
    apply_profile_map(cfg, theta_plus, out, scatter::scattering_inverse)
}

/// Slice data from future scri data.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn scri_trace_plus_to_slice(
    cfg: *const ScriConfig,
    theta: *const ScriProfileHandle,
    out: *mut *mut ScriSigma,
) -> ScriStatus {
    guard(|| {
        if cfg.is_null() || theta.is_null() || out.is_null() {
            return fail(ScriStatus::NullPointer, "null argument");
        }
        let c = &(*cfg).0;
        from_core(scatter::trace_t_plus_0(&(*theta).0, &c.coeff_b(), &c.scatter()), |d| {
            *out = Box::into_raw(Box::new(ScriSigma(d)))
        })
    })
}

/// Future scri data from slice data.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn scri_trace_slice_to_plus(
    cfg: *const ScriConfig,
    data: *const ScriSigma,
    out: *mut *mut ScriProfileHandle,
) -> ScriStatus {
    guard(|| {
        if cfg.is_null() || data.is_null() || out.is_null() {
            return fail(ScriStatus::NullPointer, "null argument");
        }
        let c = &(*cfg).0;
        from_core(scatter::trace_t0_plus(&(*data).0, &c.coeff_b(), &c.scatter()), |p| {
            *out = Box::into_raw(Box::new(ScriProfileHandle(p)))
        })
    })
}

/// Number of slice samples, or 0 for a null handle.
///
/// # Safety
/// `d` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn scri_sigma_len(d: *const ScriSigma) -> usize {
    d.as_ref().map_or(0, |d| d.0.len())
}

/// Copies r*, field and T-derivative samples; any output pointer may be null.
///
/// # Safety
/// `d` must be a live handle; non-null buffers must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn scri_sigma_values(
    d: *const ScriSigma,
    rstar: *mut f64,
    theta: *mut f64,
    xi: *mut f64,
    cap: usize,
) -> ScriStatus {
    guard(|| {
        let Some(d) = d.as_ref() else { return fail(ScriStatus::NullPointer, "null handle") };
        let n = d.0.len();
        if cap < n {
            return fail(ScriStatus::BufferTooSmall, format!("need {n} doubles"));
        }
        if !rstar.is_null() {
            for k in 0..n {
                *rstar.add(k) = d.0.rstar(k);
            }
        }
        if !theta.is_null() {
            ptr::copy_nonoverlapping(d.0.theta.as_ptr(), theta, n);
        }
        if !xi.is_null() {
            ptr::copy_nonoverlapping(d.0.xi.as_ptr(), xi, n);
        }
        ScriStatus::Ok
    })
}

/// # Safety
/// `d` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn scri_sigma_free(d: *mut ScriSigma) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Runs the command-line front end with `argv[0..argc]` and returns its exit code.
///
/// # Safety
/// `argv` must hold `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn scri_cli_main(argc: c_int, argv: *const *const c_char) -> c_int {
    if argv.is_null() || argc < 1 {
        set_error("empty argument vector".into());
        return 2;
    }
    let mut args = Vec::with_capacity(argc as usize);
    for k in 0..argc as usize {
        match str_arg(*argv.add(k)) {
            Ok(s) => args.push(OsString::from(s)),
            Err(_) => return 2,
        }
    }
    catch_unwind(|| scri_scatter::cli::main_with_args(args)).unwrap_or(101)
}
