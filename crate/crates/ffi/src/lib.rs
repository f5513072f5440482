//! C ABI over `boltzinv`.
//!
//! Objects are opaque heap handles created by `bi_*_new` style calls and
//! released with the matching `bi_*_free`. Every fallible call returns a
//! [`BiStatus`]; on failure `bi_last_error()` holds a message for the
//! calling thread. Panics never cross the boundary (they map to
//! `BI_STATUS_PANIC`).

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use boltzinv::lightray::{lray_adjoint, lray_with, WeightFunction};
use boltzinv::reconstruct::{recover_spacelike, ReconstructionConfig};
use boltzinv::transport::{
    boltzmann_measure, AbsorptionField, PhaseFunction, ScatteringKernelField, SourceTerm,
};
use boltzinv::{build_direction_quadrature, DirectionQuadrature, Error, Lattice, RayData, ScalarField, TimeAxis};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BiStatus {
    Ok = 0,
    InvalidArgument = 1,
    OutOfRange = 2,
    ShapeMismatch = 3,
    SupportViolation = 4,
    Cfl = 5,
    InvalidWeight = 6,
    VanishingSymbol = 7,
    Divergence = 8,
    Stagnation = 9,
    NonFinite = 10,
    Io = 11,
    Format = 12,
    NullPointer = 13,
    Panic = 14,
}

impl From<&Error> for BiStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => BiStatus::InvalidArgument,
            Error::OutOfRange(_) => BiStatus::OutOfRange,
            Error::ShapeMismatch(_) => BiStatus::ShapeMismatch,
            Error::SupportViolation(_) => BiStatus::SupportViolation,
            Error::Cfl { .. } => BiStatus::Cfl,
            Error::InvalidWeight(_) => BiStatus::InvalidWeight,
            Error::VanishingSymbol(_) => BiStatus::VanishingSymbol,
            Error::Divergence { .. } => BiStatus::Divergence,
            Error::Stagnation { .. } => BiStatus::Stagnation,
            Error::NonFinite(_) => BiStatus::NonFinite,
            Error::Io(_) => BiStatus::Io,
            Error::Format(_) => BiStatus::Format,
        }
    }
}

/// Spacetime lattice.
pub struct BiLattice(Arc<Lattice>);
/// Direction quadrature on the unit sphere.
pub struct BiQuadrature(Arc<DirectionQuadrature>);
/// Real scalar field `f(t, x)`.
pub struct BiScalarField(ScalarField<f64>);
/// Real ray data `g(x, theta)`.
pub struct BiRayData(RayData<f64>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard<F: FnOnce() -> Result<(), (BiStatus, String)>>(f: F) -> BiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            BiStatus::Ok
        }
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            BiStatus::Panic
        }
    }
}

fn lib(e: Error) -> (BiStatus, String) {
    ((&e).into(), e.to_string())
}

fn null(what: &str) -> (BiStatus, String) {
    (BiStatus::NullPointer, format!("{what} is null"))
}

unsafe fn href<'a, T>(p: *const T, what: &str) -> Result<&'a T, (BiStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), (BiStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize) -> Result<(), (BiStatus, String)> {
    if dst.is_null() {
        return Err(null("destination buffer"));
    }
    if len != src.len() {
        return Err((
            BiStatus::ShapeMismatch,
            format!("buffer holds {len} values, field has {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, len);
    Ok(())
}

/// Message of the last failed call on this thread (empty after a success).
/// Valid until the next `bi_*` call on the same thread.
#[no_mangle]
pub extern "C" fn bi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static string.
#[no_mangle]
pub extern "C" fn bi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn bi_lattice_new(
    t_final: f64,
    n_t: usize,
    box_len: f64,
    n_x: usize,
    margin: f64,
    out: *mut *mut BiLattice,
) -> BiStatus {
    guard(|| {
        let l = Lattice::new(t_final, n_t, box_len, n_x, margin).map_err(lib)?;
        put(out, BiLattice(Arc::new(l)))
    })
}

/// # Safety
/// `lat` must come from `bi_lattice_new` (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bi_lattice_free(lat: *mut BiLattice) {
    if !lat.is_null() {
        drop(Box::from_raw(lat));
    }
}

/// Number of spatial points `n_x^3` (0 for a null handle).
///
/// # Safety
/// `lat` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bi_lattice_n_space(lat: *const BiLattice) -> usize {
    lat.as_ref().map_or(0, |l| l.0.n_space())
}

/// Number of window time samples (0 for a null handle).
///
/// # Safety
/// `lat` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bi_lattice_n_t(lat: *const BiLattice) -> usize {
    lat.as_ref().map_or(0, |l| l.0.n_t)
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn bi_quadrature_new(degree: usize, out: *mut *mut BiQuadrature) -> BiStatus {
    guard(|| {
        let q = build_direction_quadrature(degree).map_err(lib)?;
        put(out, BiQuadrature(Arc::new(q)))
    })
}

/// # Safety
/// `q` must come from `bi_quadrature_new` (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bi_quadrature_free(q: *mut BiQuadrature) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Number of directions (0 for a null handle).
///
/// # Safety
/// `q` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bi_quadrature_len(q: *const BiQuadrature) -> usize {
    q.as_ref().map_or(0, |q| q.0.len())
}

/// Copies the quadrature weights (they sum to `4 pi`) into `dst`.
///
/// # Safety
/// `dst` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bi_quadrature_weights(q: *const BiQuadrature, dst: *mut f64, len: usize) -> BiStatus {
    guard(|| copy_out(&href(q, "quadrature")?.0.weights, dst, len))
}

/// Window field from `n_t * n_space` values, layout `[t][x][y][z]`.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` to storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn bi_scalar_field_new(
    lat: *const BiLattice,
    values: *const f64,
    len: usize,
    out: *mut *mut BiScalarField,
) -> BiStatus {
    guard(|| {
        let lat = href(lat, "lattice")?;
        if values.is_null() {
            return Err(null("values"));
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        let f = ScalarField::from_values(lat.0.clone(), TimeAxis::Window, v).map_err(lib)?;
        put(out, BiScalarField(f))
    })
}

/// # Safety
/// `f` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bi_scalar_field_free(f: *mut BiScalarField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of stored values (0 for a null handle).
///
/// # Safety
/// `f` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bi_scalar_field_len(f: *const BiScalarField) -> usize {
    f.as_ref().map_or(0, |f| f.0.values.len())
}

/// Copies the values into `dst`, which must hold exactly `len` doubles.
///
/// # Safety
/// `dst` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bi_scalar_field_copy(f: *const BiScalarField, dst: *mut f64, len: usize) -> BiStatus {
    guard(|| copy_out(&href(f, "field")?.0.values, dst, len))
}

/// # Safety
/// `g` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bi_ray_data_free(g: *mut BiRayData) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of stored values, `n_dirs * n_space` (0 for a null handle).
///
/// # Safety
/// `g` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bi_ray_data_len(g: *const BiRayData) -> usize {
    g.as_ref().map_or(0, |g| g.0.values.len())
}

/// # Safety
/// `dst` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bi_ray_data_copy(g: *const BiRayData, dst: *mut f64, len: usize) -> BiStatus {
    guard(|| copy_out(&href(g, "ray data")?.0.values, dst, len))
}

/// Light ray transform `L f(x, theta) = int f(s, x + s theta) ds`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bi_lray(
    f: *const BiScalarField,
    q: *const BiQuadrature,
    out: *mut *mut BiRayData,
) -> BiStatus {
    guard(|| {
        let f = href(f, "field")?;
        let q = href(q, "quadrature")?;
        let g = lray_with(&f.0, &WeightFunction::Unit, 0.0, q.0.clone()).map_err(lib)?;
        put(out, BiRayData(g))
    })
}

/// Transpose of `bi_lray` in the discrete L2 pairing, on the window times.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bi_lray_adjoint(g: *const BiRayData, out: *mut *mut BiScalarField) -> BiStatus {
    guard(|| {
        let g = href(g, "ray data")?;
        let f = lray_adjoint(&g.0, &WeightFunction::Unit, TimeAxis::Window).map_err(lib)?;
        put(out, BiScalarField(f))
    })
}

/// Measurement `u(T, x, theta)` for constant absorption `sigma` and an
/// isotropic kernel `lambda * c(t, x) / 4 pi` (`c` may be null for no
/// scattering).
///
/// # Safety
/// Handles must be live or, for `c`, null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bi_boltzmann_measure(
    f: *const BiScalarField,
    q: *const BiQuadrature,
    sigma: f64,
    c: *const BiScalarField,
    lambda: f64,
    out: *mut *mut BiRayData,
) -> BiStatus {
    guard(|| {
        let f = href(f, "source")?;
        let q = href(q, "quadrature")?;
        let lat = f.0.lattice.clone();
        let sig = AbsorptionField::constant(lat.clone(), sigma).map_err(lib)?;
        let k = match c.as_ref() {
            None => ScatteringKernelField::zero(lat, q.0.clone()),
            Some(c) => ScatteringKernelField::factorized(c.0.clone(), PhaseFunction::Isotropic, q.0.clone())
                .map_err(lib)?
                .with_lambda(boltzinv::C64::new(lambda, 0.0)),
        };
        let src = SourceTerm::scalar(f.0.clone(), q.0.clone()).map_err(lib)?;
        let (g, _) = boltzmann_measure(&src, &sig, &k, 1e-10, 200).map_err(lib)?;
        put(out, BiRayData(g))
    })
}

/// Direct recovery of `phi(D)(kappa f)` (padded time axis) from `u_T` for
/// constant absorption and no scattering.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bi_recover_spacelike(
    ut: *const BiRayData,
    sigma: f64,
    out: *mut *mut BiScalarField,
) -> BiStatus {
    guard(|| {
        let ut = href(ut, "measurement")?;
        let lat = ut.0.lattice.clone();
        let sig = AbsorptionField::constant(lat.clone(), sigma).map_err(lib)?;
        let k = ScatteringKernelField::zero(lat, ut.0.quadrature.clone());
        let res = recover_spacelike(&ut.0, &sig, &k, &ReconstructionConfig::default()).map_err(lib)?;
        put(out, BiScalarField(res.recovered))
    })
}
