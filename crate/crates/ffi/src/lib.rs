//! C interface to nfsolve.
//!
//! Every function returns an [`NfsStatus`]; on failure the message is
//! available from [`nfs_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nfsolve::channel::{discrete_eigenpairs, discretize_h, transverse_extent, SpectrumDecomposition, SpectrumOptions};
use nfsolve::config::RunConfig;
use nfsolve::grid::{Grid, GridSpec, QuadratureRule};
use nfsolve::potential::{q_norm_bound, PotentialSpec};
use nfsolve::scattering::{scattering_state, ScatteringState};
use nfsolve::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NfsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A solvability or admissibility condition failed.
    ConditionFailed = 3,
    NonConvergence = 4,
    Config = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NfsRule {
    Trapezoid = 0,
    Midpoint = 1,
}

pub struct NfsGrid(Grid);
pub struct NfsPotential(PotentialSpec);
pub struct NfsState(ScatteringState);
pub struct NfsSpectrum(SpectrumDecomposition);
pub struct NfsReport {
    json: CString,
    exit_code: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NfsStatus {
    match e {
        _ if e.is_condition_failure() => NfsStatus::ConditionFailed,
        Error::NonConvergence { .. } => NfsStatus::NonConvergence,
        Error::Config(_) | Error::Json(_) => NfsStatus::Config,
        Error::Io(_) | Error::Cache(_) => NfsStatus::Io,
        _ => NfsStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (NfsStatus, String)>) -> NfsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NfsStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            NfsStatus::Panic
        }
    }
}

fn lib<T>(r: nfsolve::Result<T>) -> Result<T, (NfsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (NfsStatus, String) {
    (NfsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (NfsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (NfsStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text(p: *const c_char, what: &str) -> Result<String, (NfsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (NfsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call.
#[no_mangle]
pub extern "C" fn nfs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `grid` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn nfs_grid_new(dim: usize, extent: f64, points_per_axis: usize, rule: NfsRule, grid: *mut *mut NfsGrid) -> NfsStatus {
    guard(|| {
        let slot = out(grid, "grid")?;
        let rule = match rule {
            NfsRule::Trapezoid => QuadratureRule::Trapezoid,
            NfsRule::Midpoint => QuadratureRule::Midpoint,
        };
        let g = lib(Grid::new(&GridSpec {
            dim,
            extent,
            points_per_axis,
            rule,
        }))?;
        *slot = Box::into_raw(Box::new(NfsGrid(g)));
        Ok(())
    })
}

/// Number of grid nodes, or 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a handle from [`nfs_grid_new`].
#[no_mangle]
pub unsafe extern "C" fn nfs_grid_len(grid: *const NfsGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

/// # Safety
/// `grid` must be null or a handle from [`nfs_grid_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nfs_grid_free(grid: *mut NfsGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Parses a potential such as `{"family":"gaussian","params":{"beta":1,"c":1}}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `potential` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfs_potential_from_json(json: *const c_char, potential: *mut *mut NfsPotential) -> NfsStatus {
    guard(|| {
        let slot = out(potential, "potential")?;
        let s = text(json, "json")?;
        let v: PotentialSpec = serde_json::from_str(&s).map_err(|e| (NfsStatus::Config, e.to_string()))?;
        *slot = Box::into_raw(Box::new(NfsPotential(v)));
        Ok(())
    })
}

/// # Safety
/// `potential` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nfs_potential_free(potential: *mut NfsPotential) {
    if !potential.is_null() {
        drop(Box::from_raw(potential));
    }
}

/// Uniform bound on the sup-norm operator norm of the Lippmann-Schwinger
/// operator.
///
/// # Safety
/// `potential` must be a live handle and `bound` writable.
#[no_mangle]
pub unsafe extern "C" fn nfs_q_norm_bound(potential: *const NfsPotential, bound: *mut f64) -> NfsStatus {
    guard(|| {
        let v = deref(potential, "potential")?;
        let slot = out(bound, "bound")?;
        *slot = lib(q_norm_bound(&v.0))?.bound;
        Ok(())
    })
}

/// Scattering state at wavevector `k` on a three-dimensional grid.
///
/// # Safety
/// `potential` and `grid` must be live handles, `k` must point to three
/// values and `state` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfs_scattering_state(
    potential: *const NfsPotential,
    grid: *const NfsGrid,
    k: *const f64,
    tol: f64,
    max_iter: usize,
    state: *mut *mut NfsState,
) -> NfsStatus {
    guard(|| {
        let v = deref(potential, "potential")?;
        let g = deref(grid, "grid")?;
        if k.is_null() {
            return Err(null("k"));
        }
        let slot = out(state, "state")?;
        let k = [*k, *k.add(1), *k.add(2)];
        let s = lib(scattering_state(k, &v.0, &g.0, tol, max_iter))?;
        *slot = Box::into_raw(Box::new(NfsState(s)));
        Ok(())
    })
}

/// Number of complex values held by the state, or 0 for a null handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nfs_state_len(state: *const NfsState) -> usize {
    state.as_ref().map_or(0, |s| s.0.values.len())
}

/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nfs_state_iterations(state: *const NfsState) -> usize {
    state.as_ref().map_or(0, |s| s.0.iterations)
}

/// Copies the state as interleaved (re, im) pairs into `buffer`, which must
/// hold `2 * nfs_state_len(state)` doubles.
///
/// # Safety
/// `state` must be a live handle and `buffer` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nfs_state_values(state: *const NfsState, buffer: *mut f64, len: usize) -> NfsStatus {
    guard(|| {
        let s = deref(state, "state")?;
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        let need = 2 * s.0.values.len();
        if len < need {
            return Err((NfsStatus::InvalidArgument, format!("buffer holds {len} doubles, {need} needed")));
        }
        let dst = std::slice::from_raw_parts_mut(buffer, need);
        for (pair, z) in dst.chunks_exact_mut(2).zip(&s.0.values) {
            pair[0] = z.re;
            pair[1] = z.im;
        }
        Ok(())
    })
}

/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nfs_state_free(state: *mut NfsState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Discrete spectrum below V+ of a one- or two-dimensional transverse
/// operator on a midpoint grid. A nonpositive `extent` picks the box from
/// the decay of the potential.
///
/// # Safety
/// `potential` must be a live handle and `spectrum` writable.
#[no_mangle]
pub unsafe extern "C" fn nfs_spectrum(
    potential: *const NfsPotential,
    dim: usize,
    extent: f64,
    points_per_axis: usize,
    zero_tol: f64,
    spectrum: *mut *mut NfsSpectrum,
) -> NfsStatus {
    guard(|| {
        let v = deref(potential, "potential")?;
        let slot = out(spectrum, "spectrum")?;
        let extent = if extent > 0.0 { extent } else { transverse_extent(&v.0) };
        let y = lib(Grid::new(&GridSpec {
            dim,
            extent,
            points_per_axis,
            rule: QuadratureRule::Midpoint,
        }))?;
        let h = lib(discretize_h(&v.0, &y))?;
        let opts = SpectrumOptions {
            zero_tol,
            ..Default::default()
        };
        let s = lib(discrete_eigenpairs(&h, v.0.v_plus(), &opts))?;
        *slot = Box::into_raw(Box::new(NfsSpectrum(s)));
        Ok(())
    })
}

/// Number of distinct levels below V+, or 0 for a null handle.
///
/// # Safety
/// `spectrum` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nfs_spectrum_levels(spectrum: *const NfsSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.0.eigenvalues.len())
}

/// Eigenvalue and multiplicity of level `j`.
///
/// # Safety
/// `spectrum` must be a live handle; `value` and `multiplicity` writable.
#[no_mangle]
pub unsafe extern "C" fn nfs_spectrum_level(spectrum: *const NfsSpectrum, j: usize, value: *mut f64, multiplicity: *mut usize) -> NfsStatus {
    guard(|| {
        let s = deref(spectrum, "spectrum")?;
        let (e, m) = s
            .0
            .eigenvalues
            .get(j)
            .zip(s.0.multiplicities.get(j))
            .ok_or_else(|| (NfsStatus::InvalidArgument, format!("level {j} out of range")))?;
        *out(value, "value")? = *e;
        *out(multiplicity, "multiplicity")? = *m;
        Ok(())
    })
}

/// # Safety
/// `spectrum` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nfs_spectrum_free(spectrum: *mut NfsSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Runs the pipeline described by a JSON run configuration, which must set
/// `command`. A pipeline that finishes with a failed condition still returns
/// NFS_STATUS_OK; its exit code is available from [`nfs_report_exit_code`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `report` writable.
#[no_mangle]
pub unsafe extern "C" fn nfs_run(config_json: *const c_char, report: *mut *mut NfsReport) -> NfsStatus {
    guard(|| {
        let slot = out(report, "report")?;
        let config = lib(RunConfig::from_json(&text(config_json, "config_json")?))?;
        let r = lib(nfsolve::cli::run(&config))?;
        let json = CString::new(lib(r.to_json())?).map_err(|e| (NfsStatus::Panic, e.to_string()))?;
        *slot = Box::into_raw(Box::new(NfsReport {
            json,
            exit_code: r.exit_code,
        }));
        Ok(())
    })
}

/// The report as JSON, owned by the handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nfs_report_json(report: *const NfsReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// 0 pass, 2 condition failure; -1 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nfs_report_exit_code(report: *const NfsReport) -> i32 {
    report.as_ref().map_or(-1, |r| r.exit_code)
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nfs_report_free(report: *mut NfsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
