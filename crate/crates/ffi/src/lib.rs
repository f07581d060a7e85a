//! C ABI over `ddi-core`.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call
//! returns a [`DdiStatus`]; on failure, [`ddi_last_error_message`] describes
//! the error for the calling thread. Strings returned through out-pointers
//! are released with [`ddi_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ddi_core::annot::CodeVocabulary;
use ddi_core::corpus::{generate_corpus, parse_corpus, serialize_corpus, CorpusFile, GeneratorSpec};
use ddi_core::infer::{predict_corpus, InferConfig};
use ddi_core::model::{load_checkpoint, ModelInstance};
use ddi_core::tagging::{roundtrip_upperbound, EncodeOptions};
use ddi_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdiStatus {
    Ok = 0,
    NullPointer = 1,
    Parse = 2,
    Validation = 3,
    Skeleton = 4,
    InvalidArgument = 5,
    Version = 6,
    Internal = 7,
    Panic = 8,
}

/// A corpus document.
pub struct DdiCorpus {
    inner: CorpusFile,
}

/// A trained model loaded from a checkpoint.
pub struct DdiModel {
    inner: ModelInstance,
}

/// Primary-mode F1 of one comparison, in [0, 1].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DdiPrimaryF1 {
    pub entity: f64,
    pub relation: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DdiStatus {
    match e {
        Error::Parse { .. } | Error::Format { .. } => DdiStatus::Parse,
        Error::Validation(_) | Error::Offset { .. } | Error::Binding { .. } => DdiStatus::Validation,
        Error::Skeleton(_) => DdiStatus::Skeleton,
        Error::Invalid(_) | Error::Config(_) | Error::Infeasible(_) => DdiStatus::InvalidArgument,
        Error::Version { .. } => DdiStatus::Version,
        Error::Shape(_) | Error::Training(_) | Error::Io { .. } => DdiStatus::Internal,
    }
}

struct Failure(DdiStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DdiStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic for `ddi_last_error_message`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DdiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DdiStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DdiStatus::Panic
        }
    }
}

unsafe fn bytes<'a>(data: *const u8, len: usize) -> Result<&'a [u8], Failure> {
    if data.is_null() {
        return if len == 0 { Ok(&[]) } else { Err(null("data")) };
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn corpus_ref<'a>(c: *const DdiCorpus, what: &str) -> Result<&'a CorpusFile, Failure> {
    c.as_ref().map(|c| &c.inner).ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: Vec<u8>) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|_| Failure(DdiStatus::Internal, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the calling thread's last failed call, or "" after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ddi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ddi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ddi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a corpus document against the built-in code vocabulary.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddi_corpus_parse(data: *const u8, len: usize, out: *mut *mut DdiCorpus) -> DdiStatus {
    guard(|| {
        let corpus = parse_corpus(bytes(data, len)?, &CodeVocabulary::placeholder())?;
        put(out, DdiCorpus { inner: corpus })
    })
}

/// Generates a synthetic annotated corpus with default mixture settings.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddi_corpus_generate(
    seed: u64,
    labels: usize,
    sentences_per_label: usize,
    out: *mut *mut DdiCorpus,
) -> DdiStatus {
    guard(|| {
        let spec = GeneratorSpec { seed, labels, sentences_per_label, ..GeneratorSpec::default() };
        let corpus = generate_corpus(&spec, &CodeVocabulary::placeholder())?;
        put(out, DdiCorpus { inner: corpus })
    })
}

/// Releases a corpus. Null is ignored.
///
/// # Safety
/// `c` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ddi_corpus_free(c: *mut DdiCorpus) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Number of sentences, or 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ddi_corpus_sentence_count(c: *const DdiCorpus) -> usize {
    c.as_ref().map_or(0, |c| c.inner.sentence_count())
}

/// Canonical serialization of a corpus, NUL-terminated.
///
/// # Safety
/// `c` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddi_corpus_serialize(c: *const DdiCorpus, out: *mut *mut c_char) -> DdiStatus {
    guard(|| put_string(out, serialize_corpus(corpus_ref(c, "corpus")?)))
}

/// Full four-criterion score report as JSON.
///
/// # Safety
/// `gold` and `pred` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddi_score_json(
    gold: *const DdiCorpus,
    pred: *const DdiCorpus,
    out: *mut *mut c_char,
) -> DdiStatus {
    guard(|| {
        let report = ddi_core::score::score(corpus_ref(gold, "gold")?, corpus_ref(pred, "pred")?)?;
        let json = serde_json::to_vec(&report).map_err(|e| Failure(DdiStatus::Internal, e.to_string()))?;
        put_string(out, json)
    })
}

/// Primary entity and relation F1 of `pred` against `gold`.
///
/// # Safety
/// `gold` and `pred` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddi_score_primary(
    gold: *const DdiCorpus,
    pred: *const DdiCorpus,
    out: *mut DdiPrimaryF1,
) -> DdiStatus {
    guard(|| {
        let report = ddi_core::score::score(corpus_ref(gold, "gold")?, corpus_ref(pred, "pred")?)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = DdiPrimaryF1 { entity: report.entity_primary().f1, relation: report.relation_primary().f1 };
        Ok(())
    })
}

/// Primary F1 of the encode-then-decode reconstruction of `gold`.
///
/// # Safety
/// `gold` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddi_roundtrip(gold: *const DdiCorpus, out: *mut DdiPrimaryF1) -> DdiStatus {
    guard(|| {
        let report = roundtrip_upperbound(corpus_ref(gold, "gold")?, &[], EncodeOptions::default())?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = DdiPrimaryF1 { entity: report.score.entity_primary().f1, relation: report.score.relation_primary().f1 };
        Ok(())
    })
}

/// Vote-merges `n` prediction sets over one skeleton.
///
/// # Safety
/// `sets` must point to `n` live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddi_ensemble_merge(
    sets: *const *const DdiCorpus,
    n: usize,
    min_votes: usize,
    out: *mut *mut DdiCorpus,
) -> DdiStatus {
    guard(|| {
        if sets.is_null() {
            return Err(null("sets"));
        }
        let handles = std::slice::from_raw_parts(sets, n);
        let corpora: Vec<CorpusFile> =
            handles.iter().map(|&h| corpus_ref(h, "set").cloned()).collect::<Result<_, _>>()?;
        let merged = ddi_core::ensemble::merge(&corpora, min_votes)?;
        put(out, DdiCorpus { inner: merged })
    })
}

/// Loads a model checkpoint.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddi_model_load(data: *const u8, len: usize, out: *mut *mut DdiModel) -> DdiStatus {
    guard(|| {
        let model = load_checkpoint(bytes(data, len)?)?;
        put(out, DdiModel { inner: model })
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `m` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ddi_model_free(m: *mut DdiModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Annotates every sentence of `corpus` with default inference settings.
///
/// # Safety
/// `model` and `corpus` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddi_predict(
    model: *const DdiModel,
    corpus: *const DdiCorpus,
    out: *mut *mut DdiCorpus,
) -> DdiStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let pred = predict_corpus(&model.inner, corpus_ref(corpus, "corpus")?, &InferConfig::default())?;
        put(out, DdiCorpus { inner: pred })
    })
}

/// Minibatch size for an objective with `n` examples.
#[no_mangle]
pub extern "C" fn ddi_minibatch_size(n: usize) -> usize {
    ddi_core::train::minibatch_size(n)
}

/// Reads the message behind `ddi_last_error_message` as an owned string.
pub fn last_error() -> String {
    unsafe { CStr::from_ptr(ddi_last_error_message()) }.to_string_lossy().into_owned()
}
