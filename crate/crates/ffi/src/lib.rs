//! C interface to the dicke library.
//!
//! Every function returns a [`DickeStatus`]; on failure the message is kept
//! per thread and read back with [`dicke_last_error`]. Models are opaque
//! handles created by [`dicke_model_new`] and released by
//! [`dicke_model_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use dicke::classical::{lyapunov_max, LyapunovOptions, MeanField, PhasePoint, Variables};
use dicke::model::{InitialState, ModelParams};
use dicke::propagate::{self, ChebyshevPropagator, EigenSystem, Generator, Propagator, DEFAULT_MAX_BLOCK};
use dicke::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DickeStatus {
    Ok = 0,
    NullPointer = 1,
    /// Rejected before any computation.
    InvalidArgument = 2,
    /// A numerical contract failed while computing.
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

/// Observable rotated by the FOTOC kick.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DickeGenerator {
    /// X = (a + a†)/2.
    Quadrature = 0,
    SpinY = 1,
    Number = 2,
}

impl From<DickeGenerator> for Generator {
    fn from(g: DickeGenerator) -> Self {
        match g {
            DickeGenerator::Quadrature => Generator::Quadrature,
            DickeGenerator::SpinY => Generator::Sy,
            DickeGenerator::Number => Generator::Number,
        }
    }
}

/// Model parameters plus a propagator built on first use.
pub struct DickeModel {
    params: ModelParams,
    propagator: OnceLock<Box<dyn Propagator + Send>>,
}

impl DickeModel {
    fn propagator(&self) -> dicke::Result<&(dyn Propagator + Send)> {
        if let Some(p) = self.propagator.get() {
            return Ok(p.as_ref());
        }
        let p = &self.params;
        let built: Box<dyn Propagator + Send> = if p.dim().div_ceil(2) <= DEFAULT_MAX_BLOCK {
            Box::new(EigenSystem::dicke(p)?)
        } else {
            Box::new(ChebyshevPropagator::dicke(p)?)
        };
        Ok(self.propagator.get_or_init(|| built).as_ref())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DickeStatus {
    match e.exit_code() {
        2 => DickeStatus::InvalidArgument,
        3 => DickeStatus::Numerical,
        _ => DickeStatus::Io,
    }
}

/// Runs `f`, recording its error or panic.
fn guard(f: impl FnOnce() -> Result<(), (DickeStatus, String)>) -> DickeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DickeStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DickeStatus::Panic
        }
    }
}

fn lib(e: Error) -> (DickeStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DickeStatus, String) {
    (DickeStatus::NullPointer, format!("`{what}` is NULL"))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dicke_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dicke_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a model with couplings in kHz and boson cutoff `n_max`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dicke_model_new(
    n_spins: usize,
    g_khz: f64,
    delta_khz: f64,
    b_khz: f64,
    n_max: usize,
    out: *mut *mut DickeModel,
) -> DickeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = ModelParams::new(n_spins, g_khz, delta_khz, b_khz, n_max).map_err(lib)?;
        let model = Box::new(DickeModel {
            params,
            propagator: OnceLock::new(),
        });
        // SAFETY: checked non-null; the caller guarantees it is writable.
        unsafe { *out = Box::into_raw(model) };
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `model` must come from [`dicke_model_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dicke_model_free(model: *mut DickeModel) {
    if !model.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// # Safety
/// `model` must be NULL or a live handle.
unsafe fn model_ref<'a>(model: *const DickeModel) -> Result<&'a DickeModel, (DickeStatus, String)> {
    // SAFETY: forwarded from the caller.
    unsafe { model.as_ref() }.ok_or_else(|| null("model"))
}

/// # Safety
/// `ptr` must be NULL or point to `len` readable values.
unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], (DickeStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    // SAFETY: forwarded from the caller.
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

/// # Safety
/// `ptr` must be NULL or point to `len` writable values.
unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], (DickeStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    // SAFETY: forwarded from the caller.
    Ok(unsafe { std::slice::from_raw_parts_mut(ptr, len) })
}

/// Critical field B_c = 4g²/δ in kHz.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dicke_critical_field_khz(model: *const DickeModel, out: *mut f64) -> DickeStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = m.params.critical_field_khz().map_err(lib)?;
        Ok(())
    })
}

/// FOTOC F(t) and var(G)(t) of |−N/2⟩_x ⊗ |0⟩ on an ascending grid of
/// `len` times in ms.
///
/// # Safety
/// `times` must hold `len` readable values and `fidelity`, `variance` room
/// for `len` values each.
#[no_mangle]
pub unsafe extern "C" fn dicke_fotoc(
    model: *const DickeModel,
    generator: DickeGenerator,
    dphi: f64,
    times: *const f64,
    len: usize,
    fidelity: *mut f64,
    variance: *mut f64,
) -> DickeStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        let times = unsafe { slice(times, len, "times")? };
        let fid = unsafe { slice_mut(fidelity, len, "fidelity")? };
        let var = unsafe { slice_mut(variance, len, "variance")? };
        if !dphi.is_finite() {
            return Err((DickeStatus::InvalidArgument, "`dphi` must be finite".into()));
        }
        if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !t.is_finite()) {
            return Err((DickeStatus::InvalidArgument, "`times` must be finite and ascending".into()));
        }
        let psi0 = InitialState::critical().prepare(&m.params).map_err(lib)?;
        let prop = m.propagator().map_err(lib)?;
        let s = propagate::fotoc(&psi0, prop, &m.params, generator.into(), dphi, times).map_err(lib)?;
        fid.copy_from_slice(&s.fidelity);
        var.copy_from_slice(&s.variance);
        Ok(())
    })
}

/// Maximal mean-field Lyapunov exponent (ms⁻¹) from S = (−N/2, 0, 0), α = 0.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dicke_lyapunov_max(model: *const DickeModel, t_end_ms: f64, out: *mut f64) -> DickeStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let opts = LyapunovOptions {
            t_end: t_end_ms,
            ..LyapunovOptions::default()
        };
        let mf = MeanField::new(&m.params, Variables::Rescaled);
        *out = lyapunov_max(&PhasePoint::critical(m.params.n_spins), &mf, &opts)
            .map_err(lib)?
            .lambda;
        Ok(())
    })
}
