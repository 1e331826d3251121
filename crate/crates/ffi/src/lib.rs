//! C ABI over a trained Koopman autoencoder and its ensemble Kalman filter.
//!
//! Models and filters are opaque heap handles created by `kae_*_new` /
//! `kae_model_load` and released by the matching `*_free`. Every fallible
//! call returns a [`KaeStatus`]; on failure the message is kept per thread
//! and can be copied out with [`kae_last_error`]. Panics are caught at the
//! boundary and reported as [`KaeStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use kae_enkf::enkf::{FilterKind, KaeFilter, NoiseConfig};
use kae_enkf::kae::{Checkpoint, KaeModel};
use kae_enkf::{Error, Rng};
use nalgebra::DVector;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KaeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Config = 4,
    Numerical = 5,
    State = 6,
    Io = 7,
    Format = 8,
    Panic = 9,
}

/// Filter layout selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KaeFilterKind {
    Latent = 0,
    FullState = 1,
}

/// The five filter variances.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KaeNoise {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
}

/// Opaque trained model.
pub struct KaeModelHandle {
    model: KaeModel,
}

/// Opaque running filter with its own random stream.
pub struct KaeFilterHandle {
    filter: KaeFilter<KaeModel>,
    rng: Rng,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> KaeStatus {
    match e {
        Error::Dimension { .. } => KaeStatus::Dimension,
        Error::Config(_) => KaeStatus::Config,
        Error::State(_) => KaeStatus::State,
        Error::Numerical(_) => KaeStatus::Numerical,
        Error::Format { .. } => KaeStatus::Format,
        Error::Io { .. } => KaeStatus::Io,
    }
}

struct Fail(KaeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KaeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            KaeStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            KaeStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(KaeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn model_ref<'a>(h: *const KaeModelHandle) -> Result<&'a KaeModel, Fail> {
    h.as_ref().map(|h| &h.model).ok_or_else(|| null("model"))
}

unsafe fn filter_mut<'a>(h: *mut KaeFilterHandle) -> Result<&'a mut KaeFilterHandle, Fail> {
    h.as_mut().ok_or_else(|| null("filter"))
}

fn expect_len(what: &str, expected: usize, actual: usize) -> Result<(), Fail> {
    if expected == actual {
        Ok(())
    } else {
        Err(Fail(
            KaeStatus::Dimension,
            format!("{what}: expected length {expected}, got {actual}"),
        ))
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn kae_status_str(status: KaeStatus) -> *const c_char {
    let s: &'static CStr = match status {
        KaeStatus::Ok => c"ok",
        KaeStatus::NullPointer => c"null pointer",
        KaeStatus::InvalidArgument => c"invalid argument",
        KaeStatus::Dimension => c"dimension mismatch",
        KaeStatus::Config => c"invalid configuration",
        KaeStatus::Numerical => c"numerical failure",
        KaeStatus::State => c"invalid state",
        KaeStatus::Io => c"i/o error",
        KaeStatus::Format => c"malformed file",
        KaeStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn kae_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Load a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kae_model_load(
    path: *const c_char,
    out: *mut *mut KaeModelHandle,
) -> KaeStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(KaeStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let model = Checkpoint::load(Path::new(path))?.into_model()?;
        *out = Box::into_raw(Box::new(KaeModelHandle { model }));
        Ok(())
    })
}

/// Parse a checkpoint from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kae_model_from_json(
    json: *const c_char,
    out: *mut *mut KaeModelHandle,
) -> KaeStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Fail(KaeStatus::InvalidArgument, "json is not UTF-8".into()))?;
        let model = Checkpoint::from_json(text, Path::new("<memory>"))?.into_model()?;
        *out = Box::into_raw(Box::new(KaeModelHandle { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kae_model_free(model: *mut KaeModelHandle) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Measurement dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kae_model_input_dim(model: *const KaeModelHandle) -> usize {
    model.as_ref().map_or(0, |h| h.model.input_dim())
}

/// Number of conjugate pairs, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kae_model_pairs(model: *const KaeModelHandle) -> usize {
    model.as_ref().map_or(0, |h| h.model.pairs())
}

/// Copy the trained moduli and arguments, `pairs` values each.
///
/// # Safety
/// `tau` and `theta` must point to `pairs` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kae_model_spectrum(
    model: *const KaeModelHandle,
    tau: *mut f64,
    theta: *mut f64,
    pairs: usize,
) -> KaeStatus {
    guard(|| {
        let m = model_ref(model)?;
        expect_len("pairs", m.pairs(), pairs)?;
        slice_mut(tau, pairs, "tau")?.copy_from_slice(m.spectrum.tau());
        slice_mut(theta, pairs, "theta")?.copy_from_slice(m.spectrum.theta());
        Ok(())
    })
}

/// Encode one raw measurement into `2 * pairs` latent values.
///
/// # Safety
/// `x` must point to `n` doubles and `z` to `nz` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kae_model_encode(
    model: *const KaeModelHandle,
    x: *const f64,
    n: usize,
    z: *mut f64,
    nz: usize,
) -> KaeStatus {
    guard(|| {
        let m = model_ref(model)?;
        expect_len("latent output", m.latent_dim(), nz)?;
        let v = m.encode(&DVector::from_column_slice(slice(x, n, "x")?))?;
        slice_mut(z, nz, "z")?.copy_from_slice(v.as_slice());
        Ok(())
    })
}

/// Decode a latent vector back to a raw measurement.
///
/// # Safety
/// `z` must point to `nz` doubles and `x` to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kae_model_decode(
    model: *const KaeModelHandle,
    z: *const f64,
    nz: usize,
    x: *mut f64,
    n: usize,
) -> KaeStatus {
    guard(|| {
        let m = model_ref(model)?;
        expect_len("measurement output", m.input_dim(), n)?;
        let v = m.decode(&DVector::from_column_slice(slice(z, nz, "z")?))?;
        slice_mut(x, n, "x")?.copy_from_slice(v.as_slice());
        Ok(())
    })
}

/// Encode, advance `dt` steps with the trained spectrum, decode.
///
/// # Safety
/// `x` must point to `n` doubles and `out` to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kae_model_forecast(
    model: *const KaeModelHandle,
    x: *const f64,
    n: usize,
    dt: u32,
    out: *mut f64,
) -> KaeStatus {
    guard(|| {
        let m = model_ref(model)?;
        let v = m.forecast(&DVector::from_column_slice(slice(x, n, "x")?), dt)?;
        slice_mut(out, n, "out")?.copy_from_slice(v.as_slice());
        Ok(())
    })
}

/// Start a filter from measurement `x0` and the model's trained spectrum.
/// The model is copied, so the model handle may be freed afterwards.
///
/// # Safety
/// `model` must be a live handle, `x0` must point to `n` doubles, `noise`
/// must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kae_filter_new(
    model: *const KaeModelHandle,
    kind: KaeFilterKind,
    x0: *const f64,
    n: usize,
    noise: *const KaeNoise,
    members: usize,
    seed: u64,
    out: *mut *mut KaeFilterHandle,
) -> KaeStatus {
    guard(|| {
        let m = model_ref(model)?.clone();
        let noise = noise.as_ref().ok_or_else(|| null("noise"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if members < 2 {
            return Err(Fail(
                KaeStatus::InvalidArgument,
                "need at least 2 members".into(),
            ));
        }
        let x0 = DVector::from_column_slice(slice(x0, n, "x0")?);
        let kind = match kind {
            KaeFilterKind::Latent => FilterKind::Latent,
            KaeFilterKind::FullState => FilterKind::FullState,
        };
        let cfg = NoiseConfig {
            alpha1: noise.alpha1,
            alpha2: noise.alpha2,
            alpha3: noise.alpha3,
            alpha4: noise.alpha4,
            alpha5: noise.alpha5,
        };
        let mut rng = kae_enkf::seeded_rng(seed);
        let (tau, theta) = (m.spectrum.tau().to_vec(), m.spectrum.theta().to_vec());
        let filter = KaeFilter::new(m, kind, &x0, &tau, &theta, cfg, members, &mut rng)?;
        *out = Box::into_raw(Box::new(KaeFilterHandle { filter, rng }));
        Ok(())
    })
}

/// # Safety
/// `filter` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kae_filter_free(filter: *mut KaeFilterHandle) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// Assimilate one raw measurement.
///
/// # Safety
/// `filter` must be a live handle and `x` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn kae_filter_step(
    filter: *mut KaeFilterHandle,
    x: *const f64,
    n: usize,
) -> KaeStatus {
    guard(|| {
        let h = filter_mut(filter)?;
        let x = DVector::from_column_slice(slice(x, n, "x")?);
        h.filter.step(&x, &mut h.rng)?;
        Ok(())
    })
}

/// Ensemble-mean moduli and circular-mean arguments.
///
/// # Safety
/// `tau` and `theta` must point to `pairs` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kae_filter_estimates(
    filter: *const KaeFilterHandle,
    tau: *mut f64,
    theta: *mut f64,
    pairs: usize,
) -> KaeStatus {
    guard(|| {
        let h = filter.as_ref().ok_or_else(|| null("filter"))?;
        expect_len("pairs", h.filter.pairs(), pairs)?;
        let (t, th) = h.filter.estimates();
        slice_mut(tau, pairs, "tau")?.copy_from_slice(&t);
        slice_mut(theta, pairs, "theta")?.copy_from_slice(&th);
        Ok(())
    })
}

/// Mean of the decoded member forecasts `dt` steps ahead.
///
/// # Safety
/// `out` must point to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kae_filter_forecast(
    filter: *const KaeFilterHandle,
    dt: u32,
    out: *mut f64,
    n: usize,
) -> KaeStatus {
    guard(|| {
        let h = filter.as_ref().ok_or_else(|| null("filter"))?;
        expect_len("forecast output", h.filter.map.input_dim(), n)?;
        let fc = h.filter.forecast(dt)?;
        slice_mut(out, n, "out")?.copy_from_slice(fc.mean.as_slice());
        Ok(())
    })
}

/// Determinant of the latent ensemble's sample covariance.
///
/// # Safety
/// `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn kae_filter_generalized_variance(
    filter: *const KaeFilterHandle,
    out: *mut f64,
) -> KaeStatus {
    guard(|| {
        let h = filter.as_ref().ok_or_else(|| null("filter"))?;
        let gv = h.filter.generalized_variance()?;
        *out.as_mut().ok_or_else(|| null("out"))? = gv;
        Ok(())
    })
}
