//! C ABI over taperlab. Every function returns a [`TaperlabStatus`]; on
//! failure [`taperlab_last_error`] describes the error for the calling thread.
//! Objects are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use taperlab::dsp::frame_count;
use taperlab::{Error, FeatureConfig, FeatureExtractor, Frame, TaperBank};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaperlabStatus {
    Ok = 0,
    /// null pointer, invalid UTF-8 or an output buffer of the wrong size
    InvalidArgument = 1,
    Config = 2,
    Input = 3,
    Diverged = 4,
    Internal = 5,
}

/// Taper bank handle.
pub struct TaperlabBank(TaperBank);

/// Feature extractor handle.
pub struct TaperlabExtractor(FeatureExtractor);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TaperlabStatus {
    match taperlab::cli::exit_code(e) {
        2 => TaperlabStatus::Config,
        3 => TaperlabStatus::Input,
        4 => TaperlabStatus::Diverged,
        _ => TaperlabStatus::Internal,
    }
}

struct Failure(TaperlabStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(TaperlabStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TaperlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TaperlabStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TaperlabStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn slice_mut<'a, T>(data: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

unsafe fn string<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| invalid(&format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(&format!("{what} is null")))
}

fn copy_out(src: &[f64], dst: &mut [f64], what: &str) -> Result<(), Failure> {
    if dst.len() != src.len() {
        return Err(invalid(&format!(
            "{what} holds {} values, {} required",
            dst.len(),
            src.len()
        )));
    }
    dst.copy_from_slice(src);
    Ok(())
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output handle pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn taperlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn taperlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// SWCE bank of `num_tapers` sine tapers of length `frame_length`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn taperlab_bank_swce(
    num_tapers: usize,
    frame_length: usize,
    out: *mut *mut TaperlabBank,
) -> TaperlabStatus {
    guard(|| store(out, TaperlabBank(taperlab::make_swce_bank(num_tapers, frame_length)?)))
}

/// Single Hamming window as a one-taper bank.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn taperlab_bank_hamming(
    frame_length: usize,
    out: *mut *mut TaperlabBank,
) -> TaperlabStatus {
    guard(|| store(out, TaperlabBank(TaperBank::single_hamming(frame_length)?)))
}

/// Parses a bank from its JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` as for [`taperlab_bank_swce`].
#[no_mangle]
pub unsafe extern "C" fn taperlab_bank_from_json(
    json: *const c_char,
    out: *mut *mut TaperlabBank,
) -> TaperlabStatus {
    guard(|| {
        let text = string(json, "json")?;
        store(out, TaperlabBank(TaperBank::from_json(text)?))
    })
}

/// Serializes a bank; release the string with [`taperlab_string_free`].
///
/// # Safety
/// `bank` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn taperlab_bank_to_json(
    bank: *const TaperlabBank,
    out: *mut *mut c_char,
) -> TaperlabStatus {
    guard(|| {
        let bank = handle(bank, "bank")?;
        if out.is_null() {
            return Err(invalid("output string pointer is null"));
        }
        let text = bank.0.to_json()?;
        *out = CString::new(text)
            .map_err(|_| invalid("bank JSON contains NUL"))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn taperlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of tapers, or 0 for a NULL handle.
///
/// # Safety
/// `bank` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn taperlab_bank_num_tapers(bank: *const TaperlabBank) -> usize {
    bank.as_ref().map_or(0, |b| b.0.num_tapers())
}

/// Taper length, or 0 for a NULL handle.
///
/// # Safety
/// `bank` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn taperlab_bank_frame_length(bank: *const TaperlabBank) -> usize {
    bank.as_ref().map_or(0, |b| b.0.frame_length())
}

/// Copies the weights into `out`, which must hold exactly `num_tapers` values.
///
/// # Safety
/// `bank` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn taperlab_bank_weights(
    bank: *const TaperlabBank,
    out: *mut f64,
    len: usize,
) -> TaperlabStatus {
    guard(|| {
        let bank = handle(bank, "bank")?;
        copy_out(bank.0.weights(), slice_mut(out, len, "out")?, "out")
    })
}

/// Replaces the weights; they must be finite and positive.
///
/// # Safety
/// `bank` must be a live handle; `weights` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn taperlab_bank_set_weights(
    bank: *mut TaperlabBank,
    weights: *const f64,
    len: usize,
) -> TaperlabStatus {
    guard(|| {
        let bank = bank.as_mut().ok_or_else(|| invalid("bank is null"))?;
        let w = slice(weights, len, "weights")?;
        bank.0 = bank.0.with_weights(w.to_vec())?;
        Ok(())
    })
}

/// # Safety
/// `bank` must come from this library or be NULL; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn taperlab_bank_free(bank: *mut TaperlabBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Weighted multi-taper power spectrum of one frame into `out`
/// (`n_fft / 2 + 1` values).
///
/// # Safety
/// `bank` must be a live handle; `frame` must point to `frame_len` doubles and
/// `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn taperlab_multitaper_power(
    bank: *const TaperlabBank,
    frame: *const f64,
    frame_len: usize,
    sample_rate: u32,
    n_fft: usize,
    out: *mut f64,
    out_len: usize,
) -> TaperlabStatus {
    guard(|| {
        let bank = handle(bank, "bank")?;
        let frame = Frame::new(slice(frame, frame_len, "frame")?.to_vec(), sample_rate)?;
        let s = taperlab::multitaper_power(&frame, &bank.0, n_fft)?;
        copy_out(&s.values, slice_mut(out, out_len, "out")?, "out")
    })
}

/// Projects `len` weights onto the floored simplex.
///
/// # Safety
/// `input` and `out` must each point to `len` doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn taperlab_project_weights(
    input: *const f64,
    out: *mut f64,
    len: usize,
) -> TaperlabStatus {
    guard(|| {
        if len == 0 {
            return Err(invalid("len is 0"));
        }
        let p = taperlab::project_weights(slice(input, len, "input")?);
        copy_out(&p, slice_mut(out, len, "out")?, "out")
    })
}

/// Feature extractor using `bank`. `config_json` may be NULL for defaults.
/// The bank is copied; the caller keeps ownership of its handle.
///
/// # Safety
/// `bank` must be a live handle; `config_json` NULL or NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn taperlab_extractor_new(
    bank: *const TaperlabBank,
    config_json: *const c_char,
    out: *mut *mut TaperlabExtractor,
) -> TaperlabStatus {
    guard(|| {
        let bank = handle(bank, "bank")?;
        let config: FeatureConfig = if config_json.is_null() {
            FeatureConfig::default()
        } else {
            serde_json::from_str(string(config_json, "config_json")?)
                .map_err(|e| Failure(TaperlabStatus::Config, e.to_string()))?
        };
        store(out, TaperlabExtractor(FeatureExtractor::new(config, bank.0.clone())?))
    })
}

/// # Safety
/// `ex` must come from this library or be NULL; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn taperlab_extractor_free(ex: *mut TaperlabExtractor) {
    if !ex.is_null() {
        drop(Box::from_raw(ex));
    }
}

/// Number of coefficients per frame, or 0 for a NULL handle.
///
/// # Safety
/// `ex` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn taperlab_extractor_num_ceps(ex: *const TaperlabExtractor) -> usize {
    ex.as_ref().map_or(0, |e| e.0.config().num_ceps)
}

/// Frames produced for a signal of `num_samples` samples.
///
/// # Safety
/// `ex` must be a live handle; `frames` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn taperlab_extractor_num_frames(
    ex: *const TaperlabExtractor,
    num_samples: usize,
    frames: *mut usize,
) -> TaperlabStatus {
    guard(|| {
        let ex = handle(ex, "extractor")?;
        if frames.is_null() {
            return Err(invalid("frames is null"));
        }
        let c = ex.0.config();
        *frames = frame_count(num_samples, c.frame_length, c.frame_shift)?;
        Ok(())
    })
}

/// MFCCs of `signal`, row-major `frames x num_ceps`, into `out`. Size the
/// buffer with [`taperlab_extractor_num_frames`] and
/// [`taperlab_extractor_num_ceps`].
///
/// # Safety
/// `ex` must be a live handle; `signal` must point to `len` doubles and `out`
/// to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn taperlab_extract(
    ex: *const TaperlabExtractor,
    signal: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> TaperlabStatus {
    guard(|| {
        let ex = handle(ex, "extractor")?;
        let m = ex.0.extract(slice(signal, len, "signal")?, "")?;
        copy_out(&m.data, slice_mut(out, out_len, "out")?, "out")
    })
}
