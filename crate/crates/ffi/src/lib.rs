//! C ABI for `chlab`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` and
//! released by the matching `*_free`. Every entry point returns a
//! [`ChlabStatus`]; on failure the message is available from
//! [`chlab_last_error`] on the same thread. Panics are caught and reported
//! as `CHLAB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chlab::harness::{self, ExperimentConfig, HarnessError};
use chlab::scattering::{self, LaxPotential};
use chlab::soliton::{self, SolitonProfile};
use chlab::{Error, Grid};

/// Result codes shared by all functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    BufferTooSmall = 4,
    Config = 5,
    Io = 6,
    Panic = 99,
}

/// Periodic grid on `[-L/2, L/2)`.
pub struct ChlabGrid(Grid);

/// Sampled soliton with its momentum density.
pub struct ChlabProfile(SolitonProfile);

/// Closed-form energies of a soliton and their speed derivatives.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ChlabInvariants {
    pub kappa: f64,
    pub h1: f64,
    pub h2: f64,
    pub dh1_dc: f64,
    pub dh2_dc: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> ChlabStatus {
    match e {
        Error::Grid(_)
        | Error::Parameter(_)
        | Error::GridMismatch
        | Error::Domain(_)
        | Error::Cfl { .. } => ChlabStatus::InvalidArgument,
        _ => ChlabStatus::Numerical,
    }
}

fn harness_status(e: &HarnessError) -> ChlabStatus {
    match e {
        HarnessError::UnknownExperiment { .. } | HarnessError::Config(_) => ChlabStatus::Config,
        HarnessError::Runtime(inner) => status_of(inner),
        HarnessError::Io(_) => ChlabStatus::Io,
    }
}

struct Fail(ChlabStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<HarnessError> for Fail {
    fn from(e: HarnessError) -> Self {
        Fail(harness_status(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ChlabStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ChlabStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ChlabStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ChlabStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn copy_out(
    src: &[f64],
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> Result<(), Fail> {
    if !out_len.is_null() {
        *out_len = src.len();
    }
    if out.is_null() {
        return Err(null("out"));
    }
    if capacity < src.len() {
        return Err(Fail(
            ChlabStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(ChlabStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next call into the library from the
/// same thread.
#[no_mangle]
pub extern "C" fn chlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a grid of `n` points on a box of length `length`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn chlab_grid_new(
    n: usize,
    length: f64,
    out: *mut *mut ChlabGrid,
) -> ChlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let g = Grid::centered(n, length)?;
        *out = Box::into_raw(Box::new(ChlabGrid(g)));
        Ok(())
    })
}

/// Number of grid points.
///
/// # Safety
/// `grid` must be NULL or a live handle from [`chlab_grid_new`].
#[no_mangle]
pub unsafe extern "C" fn chlab_grid_len(grid: *const ChlabGrid, out: *mut usize) -> ChlabStatus {
    guard(|| {
        let g = borrow(grid, "grid")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = g.0.n();
        Ok(())
    })
}

/// Copies the collocation points into `out`.
///
/// # Safety
/// `grid` must be a live handle, `out` must hold `capacity` doubles and
/// `out_len` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn chlab_grid_points(
    grid: *const ChlabGrid,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> ChlabStatus {
    guard(|| copy_out(&borrow(grid, "grid")?.0.points(), out, capacity, out_len))
}

/// Releases a grid. NULL is ignored.
///
/// # Safety
/// `grid` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chlab_grid_free(grid: *mut ChlabGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Builds the soliton of speed `c` on background `omega`, peaked at `x_peak`.
///
/// # Safety
/// `grid` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn chlab_profile_new(
    grid: *const ChlabGrid,
    c: f64,
    omega: f64,
    x_peak: f64,
    out: *mut *mut ChlabProfile,
) -> ChlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let g = borrow(grid, "grid")?;
        let p = soliton::build_profile(c, omega, &g.0, x_peak)?;
        *out = Box::into_raw(Box::new(ChlabProfile(p)));
        Ok(())
    })
}

/// Copies the profile `φ` into `out`.
///
/// # Safety
/// Same contract as [`chlab_grid_points`].
#[no_mangle]
pub unsafe extern "C" fn chlab_profile_phi(
    profile: *const ChlabProfile,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> ChlabStatus {
    guard(|| {
        copy_out(
            borrow(profile, "profile")?.0.phi.values(),
            out,
            capacity,
            out_len,
        )
    })
}

/// Copies the momentum density `m = φ - φ''` into `out`.
///
/// # Safety
/// Same contract as [`chlab_grid_points`].
#[no_mangle]
pub unsafe extern "C" fn chlab_profile_momentum(
    profile: *const ChlabProfile,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> ChlabStatus {
    guard(|| {
        copy_out(
            borrow(profile, "profile")?.0.m.values(),
            out,
            capacity,
            out_len,
        )
    })
}

/// Maximum residual of the travelling-wave equation on the grid.
///
/// # Safety
/// `profile` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn chlab_profile_residual(
    profile: *const ChlabProfile,
    out: *mut f64,
) -> ChlabStatus {
    guard(|| {
        let p = borrow(profile, "profile")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = soliton::stationary_residual(&p.0);
        Ok(())
    })
}

/// Discrete eigenvalues `κ_n` of the Lax problem with the profile as potential.
///
/// Writes at most `capacity` values and stores the count in `out_len`.
///
/// # Safety
/// Same contract as [`chlab_grid_points`].
#[no_mangle]
pub unsafe extern "C" fn chlab_profile_kappas(
    profile: *const ChlabProfile,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> ChlabStatus {
    guard(|| {
        let p = borrow(profile, "profile")?;
        let pot = LaxPotential::new(p.0.m.clone(), p.0.params.omega)?;
        let spec = scattering::discrete_eigenvalues(&pot, capacity.max(1))?;
        copy_out(&spec.kappas, out, capacity, out_len)
    })
}

/// Releases a profile. NULL is ignored.
///
/// # Safety
/// `profile` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chlab_profile_free(profile: *mut ChlabProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Closed-form invariants of the `(c, omega)` soliton.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chlab_closed_form_invariants(
    c: f64,
    omega: f64,
    out: *mut ChlabInvariants,
) -> ChlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cf = soliton::closed_form_invariants(c, omega)?;
        *out = ChlabInvariants {
            kappa: cf.kappa,
            h1: cf.h1,
            h2: cf.h2,
            dh1_dc: cf.dh1_dc,
            dh2_dc: cf.dh2_dc,
        };
        Ok(())
    })
}

/// Runs an experiment from TOML text and returns the report as JSON.
///
/// `passed` receives 1 when every assertion held. The JSON string must be
/// released with [`chlab_string_free`].
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out_json` and `passed` must be
/// writable (`passed` may be NULL).
#[no_mangle]
pub unsafe extern "C" fn chlab_run_toml(
    toml: *const c_char,
    out_json: *mut *mut c_char,
    passed: *mut i32,
) -> ChlabStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        *out_json = ptr::null_mut();
        let cfg = ExperimentConfig::from_toml(read_str(toml, "toml")?)?;
        let report = harness::run(&cfg)?;
        let json =
            serde_json::to_string(&report).map_err(|e| Fail(ChlabStatus::Io, e.to_string()))?;
        if !passed.is_null() {
            *passed = report.passed as i32;
        }
        *out_json = CString::new(json)
            .map_err(|e| Fail(ChlabStatus::Io, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
