//! C ABI over `horolab`.
//!
//! Objects are opaque heap handles created by `hl_*_new` and released by the
//! matching `hl_*_free`. Every fallible call returns an [`HlStatus`]; the
//! message of the last failure on the calling thread is available from
//! [`hl_last_error_message`]. Group elements are row-major `double[4]`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use horolab::quotient::reduce;
use horolab::stats::MonteCarlo;
use horolab::timechange::{cocycle_u, flow_timechanged};
use horolab::{BumpObservable, CocycleConfig, Error, GroupElement, SampleStreams, TimeChangeGenerator};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlStatus {
    Ok = 0,
    /// Overflow, failed reduction or non-convergence.
    Numeric = 1,
    /// Invalid input, non-admissible τ or insufficient lattice cutoff.
    Config = 2,
    NullPointer = 3,
    Panic = 4,
}

/// Opaque Poincaré-sum bump observable.
pub struct HlObservable(BumpObservable);

/// Opaque admissible time change `τ = 1 + ε ψ`, normalized to mean one.
pub struct HlTimeChange(TimeChangeGenerator);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HlStatus {
    match e.exit_code() {
        2 => HlStatus::Config,
        _ => HlStatus::Numeric,
    }
}

fn guard(f: impl FnOnce() -> Result<(), HlStatus>) -> HlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HlStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside horolab".into());
            HlStatus::Panic
        }
    }
}

fn check<T>(r: horolab::Result<T>) -> Result<T, HlStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null() -> HlStatus {
    set_error("null pointer argument".into());
    HlStatus::NullPointer
}

unsafe fn read4(p: *const f64) -> Result<[f64; 4], HlStatus> {
    if p.is_null() {
        return Err(null());
    }
    Ok(unsafe { *(p as *const [f64; 4]) })
}

unsafe fn write<T>(p: *mut T, v: T) -> Result<(), HlStatus> {
    if p.is_null() {
        return Err(null());
    }
    unsafe { p.write(v) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failed call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a bump observable centered at `center` with Frobenius radius
/// `radius`. `cutoff <= 0` selects the minimal certified cutoff.
///
/// # Safety
/// `center` must point to 4 doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn hl_observable_new(
    center: *const f64,
    radius: f64,
    amplitude: f64,
    cutoff: i64,
    out: *mut *mut HlObservable,
) -> HlStatus {
    guard(|| {
        let c = check(GroupElement::new(unsafe { read4(center)? }))?;
        let cutoff = if cutoff > 0 { cutoff } else { check(BumpObservable::minimal_cutoff(&c, radius))? };
        let f = check(BumpObservable::new(c, radius, amplitude, cutoff))?;
        unsafe { write(out, Box::into_raw(Box::new(HlObservable(f)))) }
    })
}

/// # Safety
/// `obs` must come from [`hl_observable_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hl_observable_free(obs: *mut HlObservable) {
    if !obs.is_null() {
        drop(unsafe { Box::from_raw(obs) });
    }
}

/// Value of the observable at the coset of `g`.
///
/// # Safety
/// Pointers must be valid; `g` points to 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn hl_observable_eval(obs: *const HlObservable, g: *const f64, out: *mut f64) -> HlStatus {
    guard(|| {
        let f = unsafe { obs.as_ref() }.ok_or_else(null)?;
        let g = check(GroupElement::new(unsafe { read4(g)? }))?;
        unsafe { write(out, f.0.eval_at(&g)) }
    })
}

/// Builds `τ = 1 + ε ψ` from a copy of `psi`, normalizing with
/// `normalization_samples` Haar samples drawn from `seed`.
///
/// # Safety
/// `psi` must be a live observable handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_tau_new(
    epsilon: f64,
    psi: *const HlObservable,
    seed: u64,
    normalization_samples: u64,
    out: *mut *mut HlTimeChange,
) -> HlStatus {
    guard(|| {
        let psi = unsafe { psi.as_ref() }.ok_or_else(null)?;
        if normalization_samples < 2 {
            set_error("normalization_samples must be at least 2".into());
            return Err(HlStatus::Config);
        }
        let mc = MonteCarlo::new(SampleStreams::new(seed), normalization_samples as usize);
        let tau = check(TimeChangeGenerator::new(epsilon, psi.0.clone(), &mc))?;
        unsafe { write(out, Box::into_raw(Box::new(HlTimeChange(tau)))) }
    })
}

/// # Safety
/// `tau` must come from [`hl_tau_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hl_tau_free(tau: *mut HlTimeChange) {
    if !tau.is_null() {
        drop(unsafe { Box::from_raw(tau) });
    }
}

/// Certified bound `m_τ`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_tau_m_tau(tau: *const HlTimeChange, out: *mut f64) -> HlStatus {
    guard(|| {
        let tau = unsafe { tau.as_ref() }.ok_or_else(null)?;
        unsafe { write(out, tau.0.m_tau()) }
    })
}

/// `τ` at the coset of `g`.
///
/// # Safety
/// Pointers must be valid; `g` points to 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn hl_tau_eval(tau: *const HlTimeChange, g: *const f64, out: *mut f64) -> HlStatus {
    guard(|| {
        let tau = unsafe { tau.as_ref() }.ok_or_else(null)?;
        let g = check(GroupElement::new(unsafe { read4(g)? }))?;
        unsafe { write(out, tau.0.tau_at(&g)) }
    })
}

fn cocycle_config(step: f64, tol: f64) -> Result<CocycleConfig, HlStatus> {
    let mut cfg = CocycleConfig::default();
    if !(step <= 0.0) {
        cfg.step = step;
    }
    if !(tol <= 0.0) {
        cfg.tol = tol;
    }
    check(cfg.validate())?;
    Ok(cfg)
}

/// Cocycle `u(x, t)` for `x` the coset of `g`. Non-positive `step`/`tol`
/// select the defaults (1/64, 1e-9).
///
/// # Safety
/// Pointers must be valid; `g` points to 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn hl_cocycle_u(
    tau: *const HlTimeChange,
    g: *const f64,
    t: f64,
    step: f64,
    tol: f64,
    out: *mut f64,
) -> HlStatus {
    guard(|| {
        let tau = unsafe { tau.as_ref() }.ok_or_else(null)?;
        let x = check(GroupElement::new(unsafe { read4(g)? }).and_then(|g| reduce(&g)))?;
        let cfg = cocycle_config(step, tol)?;
        let u = check(cocycle_u(&tau.0, &x, t, &cfg))?;
        unsafe { write(out, u) }
    })
}

/// Reduced representative of `h^τ_t(x)` written to `out[0..4]`.
///
/// # Safety
/// `g` points to 4 doubles, `out` to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hl_flow_timechanged(
    tau: *const HlTimeChange,
    g: *const f64,
    t: f64,
    step: f64,
    tol: f64,
    out: *mut f64,
) -> HlStatus {
    guard(|| {
        let tau = unsafe { tau.as_ref() }.ok_or_else(null)?;
        let x = check(GroupElement::new(unsafe { read4(g)? }).and_then(|g| reduce(&g)))?;
        let cfg = cocycle_config(step, tol)?;
        let y = check(flow_timechanged(&tau.0, &x, t, &cfg))?;
        unsafe { write(out as *mut [f64; 4], y.rep().0) }
    })
}

/// Fundamental-domain representative of the coset of `g`, written to
/// `out[0..4]`; its height is written to `height` when non-null.
///
/// # Safety
/// `g` points to 4 doubles, `out` to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hl_reduce(g: *const f64, out: *mut f64, height: *mut f64) -> HlStatus {
    guard(|| {
        let x = check(GroupElement::new(unsafe { read4(g)? }).and_then(|g| reduce(&g)))?;
        unsafe { write(out as *mut [f64; 4], x.rep().0)? };
        if !height.is_null() {
            unsafe { height.write(x.height()) };
        }
        Ok(())
    })
}
