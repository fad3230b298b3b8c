//! C ABI over the `nlut` library.
//!
//! Objects are opaque handles created by `nlut_*` constructors and released
//! with the matching `*_free`. Every fallible call returns an [`NlutStatus`];
//! on failure [`nlut_last_error`] describes the most recent error on the
//! calling thread. Colors cross the boundary as packed RGB triples.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use nlut::checkpoint::{self, CheckpointError};
use nlut::eval::{blend_reconstruct, invert_lut, reconstruct_lut, EvalError};
use nlut::lut::{code_to_unit, parse_cube, write_cube, Lut3D};
use nlut::nn::{IndexVector, LutNetModel, NnError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlutStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    BadCheckpoint = 4,
    ParseError = 5,
    IndexOutOfRange = 6,
    InvalidArgument = 7,
    NotInvertible = 8,
    Panic = 9,
}

/// A loaded model.
pub struct NlutModel {
    inner: LutNetModel,
}

/// A 3D lattice LUT.
pub struct NlutLut {
    inner: Lut3D,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(NlutStatus, String);

type FfiResult<T> = Result<T, Failure>;

impl From<NnError> for Failure {
    fn from(e: NnError) -> Self {
        let status = match e {
            NnError::IndexOutOfRange { .. } => NlutStatus::IndexOutOfRange,
            NnError::NotInvertibleModel | NnError::NotContractive(_) => NlutStatus::NotInvertible,
            _ => NlutStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Nn(inner) => inner.into(),
            other => Failure(NlutStatus::InvalidArgument, other.to_string()),
        }
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        let status = match e {
            CheckpointError::Io(_) => NlutStatus::Io,
            _ => NlutStatus::BadCheckpoint,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> NlutStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NlutStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NlutStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure(NlutStatus::NullPointer, "null pointer argument".into())
}

unsafe fn as_ref<'a, T>(p: *const T) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(null)
}

unsafe fn as_str<'a>(p: *const c_char) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(NlutStatus::InvalidUtf8, "string is not valid UTF-8".into()))
}

unsafe fn input<'a, T>(p: *const T, len: usize) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(null());
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn packed(rgb: &[u8]) -> Vec<[u8; 3]> {
    rgb.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next `nlut_*` call on the same thread.
#[no_mangle]
pub extern "C" fn nlut_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nlut_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn nlut_model_load(path: *const c_char, out: *mut *mut NlutModel) -> NlutStatus {
    guard(|| {
        let path = as_str(path)?;
        let inner = checkpoint::load(path)?;
        put(out, NlutModel { inner })
    })
}

/// Loads a checkpoint from memory.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn nlut_model_load_bytes(data: *const u8, len: usize, out: *mut *mut NlutModel) -> NlutStatus {
    guard(|| {
        let inner = checkpoint::from_bytes(input(data, len)?)?;
        put(out, NlutModel { inner })
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from a `nlut_model_load*` call and not be used again.
#[no_mangle]
pub unsafe extern "C" fn nlut_model_free(model: *mut NlutModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of embedded LUTs, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nlut_model_num_luts(model: *const NlutModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_luts())
}

/// Whether the model supports inversion.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nlut_model_is_invertible(model: *const NlutModel) -> bool {
    model.as_ref().is_some_and(|m| m.inner.is_invertible())
}

/// Extracts embedded LUT `index` on a `res³` lattice.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nlut_model_reconstruct(
    model: *const NlutModel,
    index: usize,
    res: usize,
    out: *mut *mut NlutLut,
) -> NlutStatus {
    guard(|| {
        let inner = reconstruct_lut(&as_ref(model)?.inner, index, res)?;
        put(out, NlutLut { inner })
    })
}

/// Extracts the LUT selected by `num_weights` blending weights.
///
/// # Safety
/// `weights` must point to `num_weights` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn nlut_model_blend(
    model: *const NlutModel,
    weights: *const f64,
    num_weights: usize,
    res: usize,
    out: *mut *mut NlutLut,
) -> NlutStatus {
    guard(|| {
        let w = IndexVector::from_weights(input(weights, num_weights)?.to_vec())?;
        let inner = blend_reconstruct(&as_ref(model)?.inner, &w, res)?;
        put(out, NlutLut { inner })
    })
}

/// Extracts the inverse of LUT `index` using `iters` fixed-point iterations.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nlut_model_invert(
    model: *const NlutModel,
    index: usize,
    res: usize,
    iters: usize,
    out: *mut *mut NlutLut,
) -> NlutStatus {
    guard(|| {
        let inner = invert_lut(&as_ref(model)?.inner, index, res, iters)?;
        put(out, NlutLut { inner })
    })
}

/// Runs the network for LUT `index` on `count` packed 8-bit RGB colors.
///
/// # Safety
/// `rgb_in` and `rgb_out` must each hold `3 * count` bytes; they may alias.
#[no_mangle]
pub unsafe extern "C" fn nlut_model_apply(
    model: *const NlutModel,
    index: usize,
    rgb_in: *const u8,
    count: usize,
    rgb_out: *mut u8,
) -> NlutStatus {
    guard(|| {
        let model = &as_ref(model)?.inner;
        let o = model.one_hot(index)?;
        let colors = packed(input(rgb_in, 3 * count)?);
        if colors.is_empty() {
            return Ok(());
        }
        let result = model.forward_codes(&colors, &o)?;
        output(rgb_out, 3 * count)?.copy_from_slice(result.codes.as_flattened());
        Ok(())
    })
}

/// Parses `.cube` text.
///
/// # Safety
/// `text` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nlut_lut_parse_cube(text: *const c_char, out: *mut *mut NlutLut) -> NlutStatus {
    guard(|| {
        let inner = parse_cube(as_str(text)?).map_err(|e| Failure(NlutStatus::ParseError, e.to_string()))?;
        put(out, NlutLut { inner })
    })
}

/// Renders a LUT as `.cube` text; release it with [`nlut_string_free`].
///
/// # Safety
/// `lut` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nlut_lut_write_cube(lut: *const NlutLut, precision: usize, out: *mut *mut c_char) -> NlutStatus {
    guard(|| {
        let text = write_cube(&as_ref(lut)?.inner, precision);
        if out.is_null() {
            return Err(null());
        }
        *out = CString::new(text).expect("cube text has no NUL").into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn nlut_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Lattice points per axis, or 0 for a null handle.
///
/// # Safety
/// `lut` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nlut_lut_size(lut: *const NlutLut) -> usize {
    lut.as_ref().map_or(0, |l| l.inner.size())
}

/// Copies the table (red fastest, `3 · size³` doubles) into `out`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nlut_lut_data(lut: *const NlutLut, out: *mut f64, len: usize) -> NlutStatus {
    guard(|| {
        let table = as_ref(lut)?.inner.table().as_flattened();
        if len != table.len() {
            return Err(Failure(
                NlutStatus::InvalidArgument,
                format!("buffer holds {len} values, table has {}", table.len()),
            ));
        }
        output(out, len)?.copy_from_slice(table);
        Ok(())
    })
}

/// Applies a LUT with trilinear interpolation to `count` packed 8-bit colors.
///
/// # Safety
/// `rgb_in` and `rgb_out` must each hold `3 * count` bytes; they may alias.
#[no_mangle]
pub unsafe extern "C" fn nlut_lut_apply(lut: *const NlutLut, rgb_in: *const u8, count: usize, rgb_out: *mut u8) -> NlutStatus {
    guard(|| {
        let lut = &as_ref(lut)?.inner;
        let colors = packed(input(rgb_in, 3 * count)?);
        let mapped: Vec<u8> = colors
            .iter()
            .flat_map(|&c| lut.apply_clamped(code_to_unit(c)).map(nlut::color::quantize_unit))
            .collect();
        output(rgb_out, 3 * count)?.copy_from_slice(&mapped);
        Ok(())
    })
}

/// Releases a LUT. Null is ignored.
///
/// # Safety
/// `lut` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn nlut_lut_free(lut: *mut NlutLut) {
    if !lut.is_null() {
        drop(Box::from_raw(lut));
    }
}
