//! C ABI over the `ficots` forecaster.
//!
//! Functions return a [`FicotsStatus`]; on failure a description is kept
//! per thread and read with [`ficots_last_error_message`]. Models are
//! opaque handles created by [`ficots_model_load`] and released with
//! [`ficots_model_free`]. Matrices are row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ficots::checkpoint::Checkpoint;
use ficots::cli::text_provider;
use ficots::data::{make_windows, ScalerStats, TimeSeriesFrame};
use ficots::model::Model;
use ficots::numerics::Tensor;
use ficots::textgen::{prompt_hash, StubEncoder, TextEncoder, TextProvider};
use ficots::training::TextSource;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FicotsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The file could not be read or its contents are malformed.
    Io = 3,
    /// A caller buffer has the wrong length; the required size has been
    /// reported through the out parameter where one exists.
    BufferSize = 4,
    Numeric = 5,
    Panic = 6,
}

/// A loaded checkpoint ready for inference.
pub struct FicotsModel {
    model: Model,
    scaler: ScalerStats,
    provider: TextProvider,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: FicotsStatus, message: impl Into<String>) -> FicotsStatus {
    set_error(message);
    status
}

fn guarded(f: impl FnOnce() -> FicotsStatus) -> FicotsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == FicotsStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(FicotsStatus::Panic, "internal panic"),
    }
}

unsafe fn utf8<'a>(ptr: *const c_char) -> Result<&'a str, FicotsStatus> {
    if ptr.is_null() {
        return Err(fail(FicotsStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(FicotsStatus::InvalidArgument, "string argument is not UTF-8"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ficots_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Description of the last failure on this thread, empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ficots_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ficots_model_load(path: *const c_char, out: *mut *mut FicotsModel) -> FicotsStatus {
    guarded(|| {
        if out.is_null() {
            return fail(FicotsStatus::NullPointer, "out is null");
        }
        *out = std::ptr::null_mut();
        let path = match utf8(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let ckpt = match Checkpoint::load(Path::new(path)) {
            Ok(c) => c,
            Err(e) => return fail(FicotsStatus::Io, e.to_string()),
        };
        let provider = match text_provider(&ckpt.config, &ckpt.scaler) {
            Ok(p) => p,
            Err(e) => return fail(FicotsStatus::Io, e.message),
        };
        *out = Box::into_raw(Box::new(FicotsModel {
            model: ckpt.model,
            scaler: ckpt.scaler,
            provider,
        }));
        FicotsStatus::Ok
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`ficots_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ficots_model_free(model: *mut FicotsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input length, horizon, variable count and embedding width.
///
/// # Safety
/// `model` must be a live handle; each out pointer must be valid.
#[no_mangle]
pub unsafe extern "C" fn ficots_model_dims(
    model: *const FicotsModel,
    seq_len: *mut usize,
    pred_len: *mut usize,
    num_vars: *mut usize,
    d_model: *mut usize,
) -> FicotsStatus {
    guarded(|| {
        if model.is_null() || seq_len.is_null() || pred_len.is_null() || num_vars.is_null() || d_model.is_null() {
            return fail(FicotsStatus::NullPointer, "null argument");
        }
        let c = (*model).model.config();
        *seq_len = c.seq_len;
        *pred_len = c.pred_len;
        *num_vars = c.num_vars;
        *d_model = c.d_model;
        FicotsStatus::Ok
    })
}

/// Forecasts one window. `input` holds `seq_len x num_vars` values in the
/// units of the training file; `output` receives `pred_len x num_vars`
/// values in the same units.
///
/// # Safety
/// `model` must be a live handle; `input` and `output` must point to at
/// least `input_len` and `output_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ficots_model_predict(
    model: *const FicotsModel,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> FicotsStatus {
    guarded(|| {
        if model.is_null() || input.is_null() || output.is_null() {
            return fail(FicotsStatus::NullPointer, "null argument");
        }
        let handle = &*model;
        let c = handle.model.config();
        let (t_in, m, n) = (c.seq_len, c.pred_len, c.num_vars);
        if input_len != t_in * n || output_len != m * n {
            return fail(
                FicotsStatus::BufferSize,
                format!(
                    "expected input of {} and output of {} values, got {input_len} and {output_len}",
                    t_in * n,
                    m * n
                ),
            );
        }
        let raw = std::slice::from_raw_parts(input, input_len);
        if raw.iter().any(|v| !v.is_finite()) {
            return fail(FicotsStatus::InvalidArgument, "input contains non-finite values");
        }
        let x = handle.scaler.transform(&Tensor::matrix(t_in, n, raw.to_vec()));
        let mut values = x.into_data();
        values.resize((t_in + m) * n, 0.0);
        let frame = match TimeSeriesFrame::new(
            (0..t_in + m).map(|t| t.to_string()).collect(),
            Tensor::matrix(t_in + m, n, values),
            (0..n).map(|j| j.to_string()).collect(),
        ) {
            Ok(f) => f,
            Err(e) => return fail(FicotsStatus::InvalidArgument, e.to_string()),
        };
        let window = make_windows(&frame, t_in, m, 0..t_in + m);
        let texts = match handle.provider.texts(&window[0]) {
            Ok(t) => t,
            Err(e) => return fail(FicotsStatus::InvalidArgument, e.to_string()),
        };
        let pred = match handle.model.predict(&window, &[texts]) {
            Ok(p) => handle.scaler.inverse_transform(&p[0]),
            Err(e) => return fail(FicotsStatus::Numeric, e.to_string()),
        };
        if !pred.is_finite() {
            return fail(FicotsStatus::Numeric, "forecast is not finite");
        }
        std::slice::from_raw_parts_mut(output, output_len).copy_from_slice(pred.data());
        FicotsStatus::Ok
    })
}

/// Token embeddings of `text` from the deterministic stub encoder, as a
/// `num_tokens x dim` matrix. `*num_tokens` is always set on success or
/// [`FicotsStatus::BufferSize`], so a first call with `out_len = 0` sizes
/// the buffer.
///
/// # Safety
/// `text` must be NUL-terminated, `num_tokens` valid, and `out` must point
/// to `out_len` doubles (it may be null when `out_len` is 0).
#[no_mangle]
pub unsafe extern "C" fn ficots_stub_encode(
    text: *const c_char,
    dim: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
    num_tokens: *mut usize,
) -> FicotsStatus {
    guarded(|| {
        if num_tokens.is_null() {
            return fail(FicotsStatus::NullPointer, "num_tokens is null");
        }
        let text = match utf8(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        if dim == 0 {
            return fail(FicotsStatus::InvalidArgument, "dim must be positive");
        }
        let emb = match StubEncoder::new(dim, seed).encode(text) {
            Ok(e) => e,
            Err(e) => return fail(FicotsStatus::InvalidArgument, e.to_string()),
        };
        *num_tokens = emb.num_tokens();
        let data = emb.tokens.data();
        if out_len != data.len() {
            return fail(
                FicotsStatus::BufferSize,
                format!("output needs {} values, got {out_len}", data.len()),
            );
        }
        if out.is_null() {
            return fail(FicotsStatus::NullPointer, "out is null");
        }
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(data);
        FicotsStatus::Ok
    })
}

/// 64-bit FNV-1a of the UTF-8 bytes of a rendered prompt, the key used in
/// embedding files.
///
/// # Safety
/// `text` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ficots_prompt_hash(text: *const c_char, out: *mut u64) -> FicotsStatus {
    guarded(|| {
        if out.is_null() {
            return fail(FicotsStatus::NullPointer, "out is null");
        }
        match utf8(text) {
            Ok(t) => {
                *out = prompt_hash(t);
                FicotsStatus::Ok
            }
            Err(s) => s,
        }
    })
}
