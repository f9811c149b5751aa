//! C ABI over `cmc_foliate`.
//!
//! Every fallible function returns a [`CmcStatus`]; on failure the message is
//! available from [`cmc_last_error_message`] on the same thread. Handles are
//! opaque and owned by the caller, who releases them with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cmc_foliate::foliation::{sweep, FoliationRecord, Schedule};
use cmc_foliate::metric::{MetricSpec, Perturbation};
use cmc_foliate::solver::{solve_leaf, LeafRecord, SolverOptions};
use cmc_foliate::verification::{kernel_bound_integral, r_from_mean_curvature};
use cmc_foliate::CmcError;
use nalgebra::Vector3;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmcStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Shape = 3,
    Fold = 4,
    Precondition = 5,
    DegenerateMass = 6,
    Divergence = 7,
    Range = 8,
    UnsupportedDimension = 9,
    Config = 10,
    Io = 11,
    Panic = 12,
}

impl From<&CmcError> for CmcStatus {
    fn from(e: &CmcError) -> Self {
        match e {
            CmcError::Domain(_) => CmcStatus::Domain,
            CmcError::Shape(_) => CmcStatus::Shape,
            CmcError::Fold(_) | CmcError::GraphFold(_) => CmcStatus::Fold,
            CmcError::Precondition(_) => CmcStatus::Precondition,
            CmcError::DegenerateMass => CmcStatus::DegenerateMass,
            CmcError::Divergence(_) => CmcStatus::Divergence,
            CmcError::Range(_) => CmcStatus::Range,
            CmcError::UnsupportedDimension(_) => CmcStatus::UnsupportedDimension,
            CmcError::Config(_) => CmcStatus::Config,
            CmcError::Io(_) | CmcError::Json(_) | CmcError::Csv(_) => CmcStatus::Io,
        }
    }
}

/// Opaque metric handle.
pub struct CmcMetric(MetricSpec);

/// Opaque handle to one solved leaf.
pub struct CmcLeaf(LeafRecord);

/// Opaque handle to a swept family of leaves.
pub struct CmcFoliation(FoliationRecord);

/// Scalar summary of a leaf.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct CmcLeafSummary {
    pub r: f64,
    pub tau: [f64; 3],
    pub target_h: f64,
    pub residual_sup: f64,
    pub phi_sup: f64,
    pub diam: f64,
    pub diam_g: f64,
    pub sup_a: f64,
    pub area: f64,
    pub iterations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

/// Runs `f`, mapping errors and panics onto status codes.
fn guard(f: impl FnOnce() -> Result<(), CmcStatus>) -> CmcStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CmcStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("panic inside cmc_foliate");
            CmcStatus::Panic
        }
    }
}

fn fail(e: CmcError) -> CmcStatus {
    set_error(&e.to_string());
    CmcStatus::from(&e)
}

fn null() -> CmcStatus {
    set_error("null pointer argument");
    CmcStatus::NullPointer
}

unsafe fn read3(p: *const f64) -> Result<[f64; 3], CmcStatus> {
    if p.is_null() {
        return Err(null());
    }
    Ok([*p, *p.add(1), *p.add(2)])
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, CmcStatus> {
    p.as_ref().ok_or_else(null)
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), CmcStatus> {
    if out.is_null() {
        return Err(null());
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn summary(leaf: &LeafRecord) -> CmcLeafSummary {
    CmcLeafSummary {
        r: leaf.r,
        tau: leaf.tau.into(),
        target_h: leaf.target_h,
        residual_sup: leaf.residual_sup,
        phi_sup: leaf.phi.sup_norm(),
        diam: leaf.curvature.diam,
        diam_g: leaf.curvature.diam_g(),
        sup_a: leaf.curvature.sup_a,
        area: leaf.curvature.area,
        iterations: leaf.iterations,
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn cmc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// `(1 + σ/|x|^{n−1}) δ` on `|x| ≥ r_min`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cmc_metric_new(n: usize, sigma: f64, r_min: f64, out: *mut *mut CmcMetric) -> CmcStatus {
    guard(|| {
        let spec = MetricSpec::new(n, sigma, Perturbation::None, r_min).map_err(fail)?;
        emit(out, CmcMetric(spec))
    })
}

/// Conformal metric centered at `center · reference_radius`.
///
/// # Safety
/// `center` must point to three readable doubles and `out` to writable
/// storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cmc_metric_new_translated(
    n: usize,
    sigma: f64,
    center: *const f64,
    reference_radius: f64,
    r_min: f64,
    out: *mut *mut CmcMetric,
) -> CmcStatus {
    guard(|| {
        let center = read3(center)?;
        let spec = MetricSpec::new(n, sigma, Perturbation::TranslatedCenter { center, reference_radius }, r_min).map_err(fail)?;
        emit(out, CmcMetric(spec))
    })
}

/// Schwarzschild-like metric plus `eps · p pᵀ (1 + |x|²)^{−n/2}`.
///
/// # Safety
/// `direction` must point to three readable doubles and `out` to writable
/// storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cmc_metric_new_bump(
    n: usize,
    sigma: f64,
    direction: *const f64,
    eps: f64,
    r_min: f64,
    out: *mut *mut CmcMetric,
) -> CmcStatus {
    guard(|| {
        let direction = read3(direction)?;
        let spec = MetricSpec::new(n, sigma, Perturbation::RankOneBump { direction, eps }, r_min).map_err(fail)?;
        emit(out, CmcMetric(spec))
    })
}

/// # Safety
/// `metric` must be null or a handle from `cmc_metric_new*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cmc_metric_free(metric: *mut CmcMetric) {
    if !metric.is_null() {
        drop(Box::from_raw(metric));
    }
}

/// Writes the row-major `3 × 3` metric at `x` into `g_out`.
///
/// # Safety
/// `metric` must be a live handle, `x` must point to three readable doubles
/// and `g_out` to nine writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cmc_metric_at(metric: *const CmcMetric, x: *const f64, g_out: *mut f64) -> CmcStatus {
    guard(|| {
        let metric = deref(metric)?;
        let x = Vector3::from(read3(x)?);
        if g_out.is_null() {
            return Err(null());
        }
        let g = metric.0.metric_at(&x).map_err(fail)?;
        for i in 0..3 {
            for j in 0..3 {
                *g_out.add(3 * i + j) = g[(i, j)];
            }
        }
        Ok(())
    })
}

fn options(lmax: usize) -> SolverOptions {
    SolverOptions { lmax, ..SolverOptions::default() }
}

/// Solves the leaf at scale `r` from a cold start with default tolerances.
///
/// # Safety
/// `metric` must be a live handle and `out` writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cmc_solve_leaf(metric: *const CmcMetric, r: f64, lmax: usize, out: *mut *mut CmcLeaf) -> CmcStatus {
    guard(|| {
        let metric = deref(metric)?;
        let leaf = solve_leaf(&metric.0, r, None, &options(lmax)).map_err(fail)?;
        emit(out, CmcLeaf(leaf))
    })
}

/// # Safety
/// `leaf` must be null or a handle from `cmc_solve_leaf` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cmc_leaf_free(leaf: *mut CmcLeaf) {
    if !leaf.is_null() {
        drop(Box::from_raw(leaf));
    }
}

/// # Safety
/// `leaf` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cmc_leaf_summary(leaf: *const CmcLeaf, out: *mut CmcLeafSummary) -> CmcStatus {
    guard(|| {
        let leaf = deref(leaf)?;
        if out.is_null() {
            return Err(null());
        }
        *out = summary(&leaf.0);
        Ok(())
    })
}

/// Number of spherical-harmonic coefficients of the leaf's graph function.
///
/// # Safety
/// `leaf` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cmc_leaf_coeff_count(leaf: *const CmcLeaf) -> usize {
    leaf.as_ref().map_or(0, |l| l.0.phi.coeffs().len())
}

/// Copies the coefficients of the rescaled graph function into `buf`, which
/// must hold at least `cmc_leaf_coeff_count(leaf)` doubles.
///
/// # Safety
/// `leaf` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cmc_leaf_phi_coeffs(leaf: *const CmcLeaf, buf: *mut f64, len: usize) -> CmcStatus {
    guard(|| {
        let leaf = deref(leaf)?;
        let coeffs = leaf.0.phi.coeffs();
        if buf.is_null() {
            return Err(null());
        }
        if len < coeffs.len() {
            return Err(fail(CmcError::Shape(format!("buffer holds {len}, need {}", coeffs.len()))));
        }
        ptr::copy_nonoverlapping(coeffs.as_ptr(), buf, coeffs.len());
        Ok(())
    })
}

/// Sweeps `r_start · ratio^k ≥ r_end` downward; fails on the first leaf that
/// does not converge.
///
/// # Safety
/// `metric` must be a live handle and `out` writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cmc_sweep(
    metric: *const CmcMetric,
    r_start: f64,
    r_end: f64,
    ratio: f64,
    lmax: usize,
    out: *mut *mut CmcFoliation,
) -> CmcStatus {
    guard(|| {
        let metric = deref(metric)?;
        let schedule = Schedule { r_start, r_end, ratio };
        let record = sweep(&metric.0, &schedule, &options(lmax)).map_err(|e| fail(e.source))?;
        emit(out, CmcFoliation(record))
    })
}

/// # Safety
/// `fol` must be null or a handle from `cmc_sweep` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cmc_foliation_free(fol: *mut CmcFoliation) {
    if !fol.is_null() {
        drop(Box::from_raw(fol));
    }
}

/// # Safety
/// `fol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cmc_foliation_len(fol: *const CmcFoliation) -> usize {
    fol.as_ref().map_or(0, |f| f.0.leaves.len())
}

/// # Safety
/// `fol` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cmc_foliation_leaf_summary(fol: *const CmcFoliation, index: usize, out: *mut CmcLeafSummary) -> CmcStatus {
    guard(|| {
        let fol = deref(fol)?;
        let leaf = fol.0.leaves.get(index).ok_or_else(|| {
            fail(CmcError::Shape(format!("leaf index {index} out of range ({} leaves)", fol.0.leaves.len())))
        })?;
        if out.is_null() {
            return Err(null());
        }
        *out = summary(leaf);
        Ok(())
    })
}

/// Smallest radial gap between adjacent leaves; positive when nested.
///
/// # Safety
/// `fol` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cmc_foliation_nesting_margin(fol: *const CmcFoliation, out: *mut f64) -> CmcStatus {
    guard(|| {
        let fol = deref(fol)?;
        let nesting = fol.0.nesting.as_ref().ok_or_else(|| {
            fail(CmcError::Precondition("nesting needs at least two leaves".into()))
        })?;
        if out.is_null() {
            return Err(null());
        }
        *out = nesting.margin;
        Ok(())
    })
}

/// Both sides of the kernel integral inequality at `ell ∈ (0, 1)`.
///
/// # Safety
/// `lhs` and `rhs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmc_kernel_bound(ell: f64, n: usize, lhs: *mut f64, rhs: *mut f64) -> CmcStatus {
    guard(|| {
        if lhs.is_null() || rhs.is_null() {
            return Err(null());
        }
        let (l, r) = kernel_bound_integral(ell, n).map_err(fail)?;
        *lhs = l;
        *rhs = r;
        Ok(())
    })
}

/// Small root `r` of `n r − (σ n²/2) rⁿ = h` in `(0, r_max]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmc_r_from_mean_curvature(h: f64, n: usize, sigma: f64, r_max: f64, out: *mut f64) -> CmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = r_from_mean_curvature(h, n, sigma, r_max).map_err(fail)?;
        Ok(())
    })
}
