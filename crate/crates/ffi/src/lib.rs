//! C interface to the `ccd` crate.
//!
//! Every function returns a [`CcdStatus`]; on failure the message is
//! available from [`ccd_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use candle_core::{Device, Tensor};

use ccd::data::{generate_corpus, load_corpus, CorpusSplit, GeneratorConfig, Split};
use ccd::distill::{ccd_loss_projected, feature_l2_projected};
use ccd::eval::{bleu, evaluate_next_step};
use ccd::model::{load_checkpoint, AnticipationModel};
use ccd::Error;

/// Result code of every call.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcdStatus {
    CCD_OK = 0,
    CCD_ERR_NULL = 1,
    CCD_ERR_CONFIG = 2,
    CCD_ERR_DATA = 3,
    CCD_ERR_INPUT = 4,
    CCD_ERR_VERSION = 5,
    CCD_ERR_NUMERIC = 6,
    CCD_ERR_IO = 7,
    CCD_ERR_INTERNAL = 8,
    CCD_ERR_PANIC = 9,
}

pub const CCD_SPLIT_TRAIN: u32 = 0;
pub const CCD_SPLIT_VAL: u32 = 1;
pub const CCD_SPLIT_TEST: u32 = 2;

/// A loaded or generated corpus.
pub struct CcdCorpus {
    inner: CorpusSplit,
}

/// A model restored from a checkpoint.
pub struct CcdModel {
    inner: AnticipationModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CcdStatus {
    match e {
        Error::Config(_) => CcdStatus::CCD_ERR_CONFIG,
        Error::Data(_) | Error::Parse { .. } => CcdStatus::CCD_ERR_DATA,
        Error::Input(_) | Error::Alignment(_) | Error::Similarity(_) => CcdStatus::CCD_ERR_INPUT,
        Error::Version(_) => CcdStatus::CCD_ERR_VERSION,
        Error::Numeric(_) => CcdStatus::CCD_ERR_NUMERIC,
        Error::Io { .. } => CcdStatus::CCD_ERR_IO,
        Error::Tensor(_) => CcdStatus::CCD_ERR_INTERNAL,
    }
}

struct Fail(CcdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<candle_core::Error> for Fail {
    fn from(e: candle_core::Error) -> Self {
        Fail(CcdStatus::CCD_ERR_INTERNAL, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CcdStatus::CCD_ERR_NULL, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CcdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CcdStatus::CCD_OK,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside ccd".into());
            CcdStatus::CCD_ERR_PANIC
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CcdStatus::CCD_ERR_INPUT, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn split_arg(split: u32) -> Result<Split, Fail> {
    match split {
        CCD_SPLIT_TRAIN => Ok(Split::Train),
        CCD_SPLIT_VAL => Ok(Split::Val),
        CCD_SPLIT_TEST => Ok(Split::Test),
        other => Err(Fail(CcdStatus::CCD_ERR_INPUT, format!("unknown split {other}"))),
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ccd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ccd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a synthetic paired corpus with the default grammar.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ccd_corpus_generate(seed: u64, n_samples: usize, out_corpus: *mut *mut CcdCorpus) -> CcdStatus {
    guard(|| {
        let slot = out(out_corpus, "out_corpus")?;
        let inner = generate_corpus(seed, n_samples, &GeneratorConfig::default())?;
        *slot = Box::into_raw(Box::new(CcdCorpus { inner }));
        Ok(())
    })
}

/// Loads a corpus file written by `ccd gen-data`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_corpus` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccd_corpus_load(path: *const c_char, out_corpus: *mut *mut CcdCorpus) -> CcdStatus {
    guard(|| {
        let slot = out(out_corpus, "out_corpus")?;
        let inner = load_corpus(&path_arg(path)?)?;
        *slot = Box::into_raw(Box::new(CcdCorpus { inner }));
        Ok(())
    })
}

/// Number of samples in one split.
///
/// # Safety
/// `corpus` must come from this library; `out_n` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccd_corpus_num_samples(corpus: *const CcdCorpus, split: u32, out_n: *mut usize) -> CcdStatus {
    guard(|| {
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        *out(out_n, "out_n")? = c.inner.split(split_arg(split)?).len();
        Ok(())
    })
}

/// Releases a corpus. Null is ignored.
///
/// # Safety
/// `corpus` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ccd_corpus_free(corpus: *mut CcdCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Restores a model checkpoint. When `corpus` is not null its vocabulary
/// must match the checkpoint's.
///
/// # Safety
/// `path` must be a NUL-terminated string, `corpus` null or a live handle,
/// `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn ccd_model_load(
    path: *const c_char,
    corpus: *const CcdCorpus,
    out_model: *mut *mut CcdModel,
) -> CcdStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let hash = corpus.as_ref().map(|c| c.inner.vocab.hash());
        let (inner, _) = load_checkpoint(&path_arg(path)?, hash.as_deref())?;
        *slot = Box::into_raw(Box::new(CcdModel { inner }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ccd_model_free(model: *mut CcdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Next-step BLEU1 and BLEU4 of a model on one split.
///
/// # Safety
/// Handles must be live; output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn ccd_model_evaluate(
    model: *const CcdModel,
    corpus: *const CcdCorpus,
    split: u32,
    out_bleu1: *mut f64,
    out_bleu4: *mut f64,
) -> CcdStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        let (b1, b4) = (out(out_bleu1, "out_bleu1")?, out(out_bleu4, "out_bleu4")?);
        let r = evaluate_next_step(&m.inner, &c.inner, split_arg(split)?, 32)?;
        *b1 = r.bleu1;
        *b4 = r.bleu4;
        Ok(())
    })
}

/// Corpus BLEU-`max_n` of `n` candidate/reference pairs. Sequences are
/// concatenated in `*_tokens` with their lengths in `*_lens`.
///
/// # Safety
/// Arrays must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn ccd_bleu(
    cand_tokens: *const u32,
    cand_lens: *const usize,
    ref_tokens: *const u32,
    ref_lens: *const usize,
    n: usize,
    max_n: usize,
    out_score: *mut f64,
) -> CcdStatus {
    guard(|| {
        let score = out(out_score, "out_score")?;
        let split_seqs = |tokens: *const u32, lens: *const usize, what: &str| -> Result<Vec<Vec<u32>>, Fail> {
            let lens = slice(lens, n, what)?;
            let total: usize = lens.iter().sum();
            let flat = slice(tokens, total, what)?;
            let mut at = 0;
            Ok(lens
                .iter()
                .map(|&l| {
                    let s = flat[at..at + l].to_vec();
                    at += l;
                    s
                })
                .collect())
        };
        let c = split_seqs(cand_tokens, cand_lens, "candidates")?;
        let r = split_seqs(ref_tokens, ref_lens, "references")?;
        *score = bleu(&c, &r, max_n)?;
        Ok(())
    })
}

fn pair(student: &[f64], teacher: &[f64], k: usize, d: usize) -> Result<(Tensor, Tensor), Fail> {
    let zs = Tensor::from_slice(student, (k, d), &Device::Cpu)?;
    let zt = Tensor::from_slice(teacher, (k, d), &Device::Cpu)?;
    Ok((zs, zt))
}

/// Contrastive distillation loss of `k` paired rows of width `d` (row-major),
/// with in-batch hard negatives and margin `margin`.
///
/// # Safety
/// `student` and `teacher` must each hold `k * d` doubles.
#[no_mangle]
pub unsafe extern "C" fn ccd_ccd_loss(
    student: *const f64,
    teacher: *const f64,
    k: usize,
    d: usize,
    margin: f64,
    out_loss: *mut f64,
) -> CcdStatus {
    guard(|| {
        let loss = out(out_loss, "out_loss")?;
        if k == 0 || d == 0 {
            return Err(Fail(CcdStatus::CCD_ERR_INPUT, "k and d must be positive".into()));
        }
        let (zs, zt) = pair(slice(student, k * d, "student")?, slice(teacher, k * d, "teacher")?, k, d)?;
        *loss = ccd_loss_projected(&zs, &zt, margin)?.to_scalar::<f64>()?;
        Ok(())
    })
}

/// Mean squared difference of `k` paired rows of width `d`.
///
/// # Safety
/// `student` and `teacher` must each hold `k * d` doubles.
#[no_mangle]
pub unsafe extern "C" fn ccd_feature_l2(
    student: *const f64,
    teacher: *const f64,
    k: usize,
    d: usize,
    out_loss: *mut f64,
) -> CcdStatus {
    guard(|| {
        let loss = out(out_loss, "out_loss")?;
        if k == 0 || d == 0 {
            return Err(Fail(CcdStatus::CCD_ERR_INPUT, "k and d must be positive".into()));
        }
        let (zs, zt) = pair(slice(student, k * d, "student")?, slice(teacher, k * d, "teacher")?, k, d)?;
        *loss = feature_l2_projected(&zs, &zt)?.to_scalar::<f64>()?;
        Ok(())
    })
}
