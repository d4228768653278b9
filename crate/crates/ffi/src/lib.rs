//! C interface to the model library: opaque model handles, integer status
//! codes, and a per-thread message for the last error.
//!
//! Strings returned through out-parameters are owned by the caller and must
//! be released with [`lohmm_string_free`]; handles with
//! [`lohmm_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lohmm::logic::parse_atom;
use lohmm::model::{ground_step_prob, load_model, save_model, Lohmm, ModelError};
use lohmm::semantics::{check_sequence, format_sequence, log_likelihood, parse_corpus, sample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LohmmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Syntax = 4,
    InvalidModel = 5,
    InvalidData = 6,
    Internal = 7,
}

/// Opaque handle to a loaded, validated model.
pub struct LohmmModel {
    inner: Lohmm,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(LohmmStatus, String);

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = match &e {
            ModelError::Io { .. } => LohmmStatus::Io,
            ModelError::Syntax { .. } | ModelError::Logic(_) | ModelError::Malformed { .. } => LohmmStatus::Syntax,
            ModelError::Validation(_) => LohmmStatus::InvalidModel,
            _ => LohmmStatus::InvalidData,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LohmmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LohmmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LohmmStatus::Internal
        }
    }
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure(LohmmStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(LohmmStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn model<'a>(m: *const LohmmModel) -> Result<&'a Lohmm, Failure> {
    m.as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| Failure(LohmmStatus::NullArgument, "model is null".into()))
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(LohmmStatus::NullArgument, "output pointer is null".into()));
    }
    Ok(())
}

fn owned(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Parses and validates a model from text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lohmm_model_parse(text: *const c_char, out: *mut *mut LohmmModel) -> LohmmStatus {
    guard(|| {
        check_out(out)?;
        let m = load_model(c_str(text, "text")?)?;
        *out = Box::into_raw(Box::new(LohmmModel { inner: m }));
        Ok(())
    })
}

/// Reads, parses and validates a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lohmm_model_load(path: *const c_char, out: *mut *mut LohmmModel) -> LohmmStatus {
    guard(|| {
        check_out(out)?;
        let m = lohmm::model::load_model_file(c_str(path, "path")?)?;
        *out = Box::into_raw(Box::new(LohmmModel { inner: m }));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lohmm_model_free(m: *mut LohmmModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of abstract transitions in the model.
///
/// # Safety
/// `m` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn lohmm_model_num_transitions(m: *const LohmmModel) -> usize {
    m.as_ref().map_or(0, |m| m.inner.num_transitions())
}

/// Writes the number of constraint violations to `count`.
///
/// # Safety
/// `m` must be a live handle and `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lohmm_model_validate(m: *const LohmmModel, count: *mut usize) -> LohmmStatus {
    guard(|| {
        check_out(count)?;
        let v = model(m)?.validate();
        *count = v.len();
        Ok(())
    })
}

/// Serializes the model in the text format.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lohmm_model_save(m: *const LohmmModel, out: *mut *mut c_char) -> LohmmStatus {
    guard(|| {
        check_out(out)?;
        *out = owned(save_model(model(m)?));
        Ok(())
    })
}

/// Natural-log likelihood of one comma-separated observation sequence;
/// negative infinity if it is impossible. Atoms must be declared
/// observations.
///
/// # Safety
/// `m` must be a live handle, `sequence` a NUL-terminated string and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lohmm_log_likelihood(m: *const LohmmModel, sequence: *const c_char, out: *mut f64) -> LohmmStatus {
    guard(|| {
        check_out(out)?;
        let m = model(m)?;
        let seqs = parse_corpus(c_str(sequence, "sequence")?).map_err(|e| Failure(LohmmStatus::Syntax, e.to_string()))?;
        let seq = match seqs.as_slice() {
            [] => Vec::new(),
            [one] => one.clone(),
            _ => return Err(Failure(LohmmStatus::InvalidData, "expected a single sequence".into())),
        };
        check_sequence(m.signature(), &seq).map_err(|e| Failure(LohmmStatus::InvalidData, e.to_string()))?;
        *out = log_likelihood(m, &seq).map_err(|e| Failure(LohmmStatus::InvalidData, e.to_string()))?;
        Ok(())
    })
}

/// Samples `len` observations with a seeded generator and returns them as
/// one comma-separated line.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lohmm_sample(m: *const LohmmModel, len: usize, seed: u64, out: *mut *mut c_char) -> LohmmStatus {
    guard(|| {
        check_out(out)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, obs) = sample(model(m)?, len, &mut rng)?;
        *out = owned(format_sequence(&obs));
        Ok(())
    })
}

/// `P(head, obs | body)` for ground atoms; `obs` is null for steps out of
/// `start`.
///
/// # Safety
/// `m` must be a live handle, the atoms NUL-terminated strings (or null
/// for `obs`) and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lohmm_ground_step_prob(
    m: *const LohmmModel,
    body: *const c_char,
    head: *const c_char,
    obs: *const c_char,
    out: *mut f64,
) -> LohmmStatus {
    guard(|| {
        check_out(out)?;
        let m = model(m)?;
        let atom = |s: *const c_char, what: &str| -> Result<_, Failure> {
            parse_atom(c_str(s, what)?).map_err(|e| Failure(LohmmStatus::Syntax, e.to_string()))
        };
        let b = atom(body, "body")?;
        let h = atom(head, "head")?;
        let o = if obs.is_null() { None } else { Some(atom(obs, "obs")?) };
        *out = ground_step_prob(m, &b, &h, o.as_ref())?;
        Ok(())
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lohmm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or an empty string.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lohmm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
