//! C ABI for voiceforge.
//!
//! Objects cross the boundary as opaque handles (`VfWaveform`, `VfModel`,
//! `VfMatrix`) created by `vf_*` constructors and released with the matching
//! `vf_*_free`. Fallible calls return a `VfStatus`; on failure
//! `vf_last_error_message` describes the error for the calling thread.
//! Panics are caught at the boundary and reported as `VF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use voiceforge::archive::ModelArchive;
use voiceforge::asr::posteriorgram;
use voiceforge::audio::{read_wav, resample, write_wav, Waveform};
use voiceforge::features::FeatureMatrix;
use voiceforge::nn::grad_check_suite;
use voiceforge::pipeline::{convert, ConversionJob};
use voiceforge::vocoder::{analyze, synthesize, VocoderConfig};
use voiceforge::{Error, PIPELINE_SAMPLE_RATE};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotFound = 3,
    Io = 4,
    UnsupportedEncoding = 5,
    Corrupt = 6,
    VersionMismatch = 7,
    ChecksumMismatch = 8,
    DimensionMismatch = 9,
    ArchitectureMismatch = 10,
    SignalTooShort = 11,
    Training = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

impl From<&Error> for VfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::NotFound(_) | Error::MissingFile { .. } => VfStatus::NotFound,
            Error::Io(_) => VfStatus::Io,
            Error::UnsupportedEncoding(_) => VfStatus::UnsupportedEncoding,
            Error::CorruptHeader(_) | Error::Corrupt(_) => VfStatus::Corrupt,
            Error::VersionMismatch { .. } => VfStatus::VersionMismatch,
            Error::ChecksumMismatch { .. } => VfStatus::ChecksumMismatch,
            Error::DimMismatch { .. }
            | Error::ShapeMismatch(_)
            | Error::ModelDimMismatch(_)
            | Error::FrameGridMismatch { .. }
            | Error::GridMismatch(_)
            | Error::LabelLengthMismatch { .. } => VfStatus::DimensionMismatch,
            Error::ArchitectureMismatch(_) => VfStatus::ArchitectureMismatch,
            Error::SignalTooShort { .. } | Error::EmptyInput | Error::EmptyAnalysis | Error::EmptySequence => {
                VfStatus::SignalTooShort
            }
            Error::NonFiniteLoss { .. } => VfStatus::Training,
            _ => VfStatus::InvalidArgument,
        }
    }
}

pub struct VfWaveform(Waveform);
pub struct VfModel(ModelArchive);
pub struct VfMatrix(FeatureMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn fail(status: VfStatus, msg: impl Into<String>) -> VfStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, mapping library errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), VfStatus>) -> VfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VfStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(VfStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn lib(e: Error) -> VfStatus {
    let status = VfStatus::from(&e);
    fail(status, e.to_string())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, VfStatus> {
    if p.is_null() {
        return Err(fail(VfStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(VfStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, VfStatus> {
    p.as_ref().ok_or_else(|| fail(VfStatus::NullPointer, format!("{what} handle is null")))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), VfStatus> {
    if out.is_null() {
        return Err(fail(VfStatus::NullPointer, "output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn at_pipeline_rate(w: &Waveform) -> Result<Waveform, VfStatus> {
    if w.sample_rate() == PIPELINE_SAMPLE_RATE {
        Ok(w.clone())
    } else {
        resample(w, PIPELINE_SAMPLE_RATE).map_err(lib)
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `len` samples into a new waveform.
///
/// # Safety
/// `samples` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_waveform_new(
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    out: *mut *mut VfWaveform,
) -> VfStatus {
    guard(|| {
        if samples.is_null() && len > 0 {
            return Err(fail(VfStatus::NullPointer, "samples is null"));
        }
        let data = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(samples, len).to_vec() };
        store(out, VfWaveform(Waveform::new(data, sample_rate).map_err(lib)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_waveform_read(path: *const c_char, out: *mut *mut VfWaveform) -> VfStatus {
    guard(|| store(out, VfWaveform(read_wav(path_arg(path)?).map_err(lib)?)))
}

/// Writes 16-bit PCM; samples beyond ±1 are saturated.
///
/// # Safety
/// `w` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vf_waveform_write(w: *const VfWaveform, path: *const c_char) -> VfStatus {
    guard(|| {
        write_wav(path_arg(path)?, &handle(w, "waveform")?.0).map_err(lib)?;
        Ok(())
    })
}

/// # Safety
/// `w` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn vf_waveform_len(w: *const VfWaveform) -> usize {
    w.as_ref().map_or(0, |w| w.0.len())
}

/// # Safety
/// `w` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn vf_waveform_sample_rate(w: *const VfWaveform) -> u32 {
    w.as_ref().map_or(0, |w| w.0.sample_rate())
}

/// Copies all samples into `dst`, which must hold `vf_waveform_len(w)` values.
///
/// # Safety
/// `w` must be a live handle; `dst` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vf_waveform_copy_samples(w: *const VfWaveform, dst: *mut f64, capacity: usize) -> VfStatus {
    guard(|| {
        let w = handle(w, "waveform")?;
        if capacity < w.0.len() {
            return Err(fail(VfStatus::BufferTooSmall, format!("need {} samples, buffer holds {capacity}", w.0.len())));
        }
        if dst.is_null() && !w.0.is_empty() {
            return Err(fail(VfStatus::NullPointer, "destination is null"));
        }
        ptr::copy_nonoverlapping(w.0.samples().as_ptr(), dst, w.0.len());
        Ok(())
    })
}

/// # Safety
/// `w` must come from this library and not be freed twice; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vf_waveform_free(w: *mut VfWaveform) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Loads a model archive, verifying magic, version and checksum.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_model_load(path: *const c_char, out: *mut *mut VfModel) -> VfStatus {
    guard(|| store(out, VfModel(ModelArchive::load(path_arg(path)?).map_err(lib)?)))
}

/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vf_model_save(m: *const VfModel, path: *const c_char) -> VfStatus {
    guard(|| handle(m, "model")?.0.save(path_arg(path)?).map_err(lib))
}

/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn vf_model_input_dim(m: *const VfModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.model().input_dim())
}

/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn vf_model_output_dim(m: *const VfModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.model().output_dim())
}

/// # Safety
/// `m` must come from this library and not be freed twice; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vf_model_free(m: *mut VfModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Phoneme posteriors of `w` (frames × classes, rows sum to 1).
///
/// # Safety
/// `model` and `w` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_posteriorgram(model: *const VfModel, w: *const VfWaveform, out: *mut *mut VfMatrix) -> VfStatus {
    guard(|| {
        let post = posteriorgram(&handle(model, "model")?.0, &handle(w, "waveform")?.0).map_err(lib)?;
        store(out, VfMatrix(post.into_matrix()))
    })
}

/// Converts `source` with a classifier archive and a conversion archive.
/// The result is at 16 kHz with the source's duration.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_convert(
    asr: *const VfModel,
    vc: *const VfModel,
    source: *const VfWaveform,
    out: *mut *mut VfWaveform,
) -> VfStatus {
    guard(|| {
        let job = ConversionJob::new(handle(source, "source")?.0.clone(), &handle(asr, "asr")?.0, &handle(vc, "vc")?.0);
        store(out, VfWaveform(convert(&job).map_err(lib)?.waveform))
    })
}

/// Vocoder analysis followed by synthesis, at 16 kHz.
///
/// # Safety
/// `w` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_resynthesize(w: *const VfWaveform, out: *mut *mut VfWaveform) -> VfStatus {
    guard(|| {
        let cfg = VocoderConfig::default();
        let w = at_pipeline_rate(&handle(w, "waveform")?.0)?;
        let analysis = analyze(&w, &cfg).map_err(lib)?;
        store(out, VfWaveform(synthesize(&analysis, cfg.sample_rate, &cfg).map_err(lib)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_matrix_load(path: *const c_char, out: *mut *mut VfMatrix) -> VfStatus {
    guard(|| store(out, VfMatrix(FeatureMatrix::load(path_arg(path)?).map_err(lib)?)))
}

/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vf_matrix_save(m: *const VfMatrix, path: *const c_char) -> VfStatus {
    guard(|| handle(m, "matrix")?.0.save(path_arg(path)?).map_err(lib))
}

/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn vf_matrix_frames(m: *const VfMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.frames())
}

/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn vf_matrix_dims(m: *const VfMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.dims())
}

/// Row-major data, `frames * dims` doubles, owned by the handle.
///
/// # Safety
/// `m` must be a live handle or null; the pointer dies with the handle.
#[no_mangle]
pub unsafe extern "C" fn vf_matrix_data(m: *const VfMatrix) -> *const f64 {
    m.as_ref().map_or(ptr::null(), |m| m.0.data().as_ptr())
}

/// # Safety
/// `m` must come from this library and not be freed twice; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vf_matrix_free(m: *mut VfMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Runs the gradient-check suite over `seeds` seeds and stores the largest
/// relative error.
///
/// # Safety
/// `max_error` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_gradcheck(seeds: usize, max_error: *mut f64) -> VfStatus {
    guard(|| {
        if max_error.is_null() {
            return Err(fail(VfStatus::NullPointer, "max_error is null"));
        }
        *max_error = grad_check_suite(seeds).map_err(lib)?.max_error();
        Ok(())
    })
}
