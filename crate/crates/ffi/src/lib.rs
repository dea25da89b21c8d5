//! C ABI over the `dome` crate.
//!
//! Every function returns a [`DomeStatus`]; on failure the message is
//! available from [`dome_last_error`] on the same thread. Networks are
//! opaque [`DomeNetwork`] handles released with [`dome_network_free`].
//! Panics never cross the boundary; they surface as `DOME_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dome::activations::{
    dome_backward, dome_forward, mdome_forward, pdome_backward, pdome_forward, DomeParams, MdomeParams, PdomeParams,
};
use dome::network::Network;
use dome::{Error, Tensor};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Domain = 4,
    Format = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Other = 9,
}

/// Trained network behind an opaque pointer.
pub struct DomeNetwork {
    net: Network,
}

/// Partial derivatives of the scalar DOME activation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DomeGradient {
    pub dx: f64,
    pub dmu: f64,
    pub dsigma: f64,
}

/// Partial derivatives of the penalized DOME activation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PdomeGradient {
    pub dx: f64,
    pub dmu: f64,
    pub dsigma: f64,
    pub dpi: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DomeStatus {
    match err {
        Error::Argument(_) | Error::Config(_) | Error::Shape(_) => DomeStatus::InvalidArgument,
        Error::Dimension { .. } => DomeStatus::Dimension,
        Error::Domain(_) => DomeStatus::Domain,
        Error::Magic { .. } | Error::Length { .. } | Error::Format(_) => DomeStatus::Format,
        Error::Io(_) | Error::MissingArtifacts(_) => DomeStatus::Io,
        _ => DomeStatus::Other,
    }
}

struct Failure(DomeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DomeStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DomeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DomeStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {message}"));
            DomeStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dome_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn dome_status_name(status: DomeStatus) -> *const c_char {
    let name: &'static CStr = match status {
        DomeStatus::Ok => c"ok",
        DomeStatus::NullPointer => c"null pointer",
        DomeStatus::InvalidArgument => c"invalid argument",
        DomeStatus::Dimension => c"dimension mismatch",
        DomeStatus::Domain => c"domain error",
        DomeStatus::Format => c"format error",
        DomeStatus::Io => c"i/o error",
        DomeStatus::BufferTooSmall => c"buffer too small",
        DomeStatus::Panic => c"panic",
        DomeStatus::Other => c"error",
    };
    name.as_ptr()
}

/// Scalar DOME value at `x`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dome_scalar_forward(x: f64, mu: f64, sigma: f64, out: *mut f64) -> DomeStatus {
    guard(|| {
        let p = DomeParams::new(mu, sigma)?;
        write(out, dome_forward(x, &p), "out")
    })
}

/// Scalar DOME partial derivatives at `x`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dome_scalar_backward(x: f64, mu: f64, sigma: f64, out: *mut DomeGradient) -> DomeStatus {
    guard(|| {
        let g = dome_backward(x, &DomeParams::new(mu, sigma)?);
        write(
            out,
            DomeGradient {
                dx: g.dx,
                dmu: g.dmu,
                dsigma: g.dsigma,
            },
            "out",
        )
    })
}

/// Penalized DOME value at `x`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dome_pdome_forward(x: f64, mu: f64, sigma: f64, pi: f64, out: *mut f64) -> DomeStatus {
    guard(|| {
        let p = PdomeParams::new(mu, sigma, pi)?;
        write(out, pdome_forward(x, &p), "out")
    })
}

/// Penalized DOME partial derivatives at `x`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dome_pdome_backward(
    x: f64,
    mu: f64,
    sigma: f64,
    pi: f64,
    out: *mut PdomeGradient,
) -> DomeStatus {
    guard(|| {
        let g = pdome_backward(x, &PdomeParams::new(mu, sigma, pi)?);
        write(
            out,
            PdomeGradient {
                dx: g.dx,
                dmu: g.dmu,
                dsigma: g.dsigma,
                dpi: g.dpi,
            },
            "out",
        )
    })
}

/// Multi-class DOME scores of one point `x` in `n − 1` dimensions,
/// written to `out[0..n]`.
///
/// # Safety
/// `x` must hold `n − 1` values and `out` must have room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn dome_mdome_forward(
    x: *const f64,
    n: usize,
    mu: f64,
    sigma: f64,
    out: *mut f64,
    out_len: usize,
) -> DomeStatus {
    guard(|| {
        let p = MdomeParams::new(n, mu, sigma)?;
        let x = slice(x, p.dim(), "x")?;
        if out_len < n {
            return Err(Failure(DomeStatus::BufferTooSmall, format!("need {n} outputs, got room for {out_len}")));
        }
        let y = mdome_forward(&Tensor::vector(x), &p)?;
        slice_mut(out, n, "out")?.copy_from_slice(y.data());
        Ok(())
    })
}

fn give(net: Network, out: *mut *mut DomeNetwork) -> Result<(), Failure> {
    let handle = Box::into_raw(Box::new(DomeNetwork { net }));
    // SAFETY: the caller guarantees `out` is writable when non-null.
    unsafe { write(out, handle, "out") }.inspect_err(|_| drop(unsafe { Box::from_raw(handle) }))
}

/// Loads a `DOME1` checkpoint file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dome_network_load(path: *const c_char, out: *mut *mut DomeNetwork) -> DomeStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(DomeStatus::InvalidArgument, "path is not UTF-8".into()))?;
        give(dome::network::load(path)?, out)
    })
}

/// Parses an in-memory `DOME1` checkpoint.
///
/// # Safety
/// `bytes` must hold `len` bytes and `out` be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dome_network_from_bytes(bytes: *const u8, len: usize, out: *mut *mut DomeNetwork) -> DomeStatus {
    guard(|| {
        let bytes = if len == 0 {
            &[][..]
        } else if bytes.is_null() {
            return Err(null("bytes"));
        } else {
            std::slice::from_raw_parts(bytes, len)
        };
        give(Network::from_bytes(bytes)?, out)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `net` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dome_network_free(net: *mut DomeNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

unsafe fn network<'a>(net: *const DomeNetwork) -> Result<&'a Network, Failure> {
    net.as_ref().map(|h| &h.net).ok_or_else(|| null("network"))
}

/// Shape queries: values per input example, output width and embedding
/// width.
///
/// # Safety
/// `net` must be a live handle; each non-null pointer valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dome_network_dims(
    net: *const DomeNetwork,
    input_len: *mut usize,
    output_width: *mut usize,
    embedding_dim: *mut usize,
) -> DomeStatus {
    guard(|| {
        let net = network(net)?;
        if !input_len.is_null() {
            input_len.write(net.input_shape().iter().product());
        }
        if !output_width.is_null() {
            output_width.write(net.output_width());
        }
        if !embedding_dim.is_null() {
            embedding_dim.write(net.embedding_dim());
        }
        Ok(())
    })
}

unsafe fn batch(net: &Network, inputs: *const f64, rows: usize) -> Result<Tensor, Failure> {
    let per: usize = net.input_shape().iter().product();
    let data = slice(inputs, rows * per, "inputs")?;
    let mut shape = vec![rows];
    shape.extend_from_slice(net.input_shape());
    Ok(Tensor::new(shape, data.to_vec())?)
}

fn check_room(need: usize, have: usize) -> Result<(), Failure> {
    if have < need {
        return Err(Failure(DomeStatus::BufferTooSmall, format!("need {need} values, got room for {have}")));
    }
    Ok(())
}

/// Predicted class of each of `rows` row-major examples.
///
/// # Safety
/// `inputs` must hold `rows · input_len` values; `labels` room for `rows`.
#[no_mangle]
pub unsafe extern "C" fn dome_network_predict(
    net: *const DomeNetwork,
    inputs: *const f64,
    rows: usize,
    labels: *mut usize,
) -> DomeStatus {
    guard(|| {
        let net = network(net)?;
        let pred = net.predict(&batch(net, inputs, rows)?)?;
        slice_mut(labels, rows, "labels")?.copy_from_slice(&pred);
        Ok(())
    })
}

/// Network outputs, `rows × output_width`, row-major.
///
/// # Safety
/// `inputs` must hold `rows · input_len` values; `out` room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn dome_network_output(
    net: *const DomeNetwork,
    inputs: *const f64,
    rows: usize,
    out: *mut f64,
    out_len: usize,
) -> DomeStatus {
    guard(|| {
        let net = network(net)?;
        check_room(rows * net.output_width(), out_len)?;
        let y = net.output(&batch(net, inputs, rows)?)?;
        slice_mut(out, y.len(), "out")?.copy_from_slice(y.data());
        Ok(())
    })
}

/// Penultimate-layer embeddings, `rows × embedding_dim`, row-major.
///
/// # Safety
/// `inputs` must hold `rows · input_len` values; `out` room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn dome_network_embed(
    net: *const DomeNetwork,
    inputs: *const f64,
    rows: usize,
    out: *mut f64,
    out_len: usize,
) -> DomeStatus {
    guard(|| {
        let net = network(net)?;
        check_room(rows * net.embedding_dim(), out_len)?;
        let e = net.embed(&batch(net, inputs, rows)?)?;
        slice_mut(out, e.len(), "out")?.copy_from_slice(e.data());
        Ok(())
    })
}
