//! C ABI over `llmda-core`.
//!
//! Every fallible function returns an [`LlmdaStatus`]; on failure the
//! message is available from [`llmda_last_error_message`] on the same
//! thread. Handles are opaque and must be released with their `_free`
//! function. Strings returned by the library are released with
//! [`llmda_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::ptr;

use llmda::corpus::{parse_annotations, write_manifest, CaptionRecord, CorpusFormat};
use llmda::llm_gateway::{sanitize_response, SanitizeRejection};
use llmda::retrieval_math::{
    contrastive_loss_t2v, contrastive_loss_v2t, loss_gradient, mean_average_precision, mixed_similarity_matrix,
    rank_k, FeatureVector, GroundTruth, SimilarityMatrix,
};
use llmda::sampler::{bss_select, TextSource};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmdaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Math = 4,
    Corpus = 5,
    /// The completion was rejected by the sanitizer.
    Rejected = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmdaCorpusFormat {
    CuhkPedesJson = 0,
    CanonicalJsonl = 1,
}

/// Row-major `n x n` similarity matrix; row = text, column = image.
pub struct LlmdaSimilarityMatrix(SimilarityMatrix);

/// Parsed caption records.
pub struct LlmdaCorpus(Vec<CaptionRecord>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: LlmdaStatus, message: impl Into<String>) -> LlmdaStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> Result<(), (LlmdaStatus, String)> + UnwindSafe) -> LlmdaStatus {
    clear_error();
    match catch_unwind(f) {
        Ok(Ok(())) => LlmdaStatus::Ok,
        Ok(Err((status, message))) => fail(status, message),
        Err(_) => fail(LlmdaStatus::Panic, "internal panic"),
    }
}

type FfiResult<T> = Result<T, (LlmdaStatus, String)>;

fn null(what: &str) -> (LlmdaStatus, String) {
    (LlmdaStatus::NullPointer, format!("`{what}` is null"))
}

fn math<T>(r: Result<T, llmda::retrieval_math::MathError>) -> FfiResult<T> {
    r.map_err(|e| (LlmdaStatus::Math, e.to_string()))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (LlmdaStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn matrix<'a>(m: *const LlmdaSimilarityMatrix) -> FfiResult<&'a SimilarityMatrix> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("matrix"))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (LlmdaStatus::InvalidArgument, "string contains a NUL byte".to_string()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn llmda_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn llmda_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn llmda_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Cosine similarity of two `dim`-length vectors.
///
/// # Safety
/// `a` and `b` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llmda_cosine_similarity(
    a: *const f64,
    b: *const f64,
    dim: usize,
    out: *mut f64,
) -> LlmdaStatus {
    guard(|| {
        let a = FeatureVector::new(slice(a, dim, "a")?.to_vec());
        let b = FeatureVector::new(slice(b, dim, "b")?.to_vec());
        let s = math(mixed_similarity_matrix(&[math(a)?], &[math(b)?]))?;
        write_out(out, s.get(0, 0), "out")
    })
}

/// Wraps `n * n` row-major values (row = text, column = image).
///
/// # Safety
/// `values` must point to `n * n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llmda_similarity_matrix_new(
    values: *const f64,
    n: usize,
    out: *mut *mut LlmdaSimilarityMatrix,
) -> LlmdaStatus {
    guard(|| {
        let len = n.checked_mul(n).ok_or((LlmdaStatus::InvalidArgument, "n is too large".to_string()))?;
        let m = math(SimilarityMatrix::new(n, slice(values, len, "values")?.to_vec()))?;
        write_out(out, Box::into_raw(Box::new(LlmdaSimilarityMatrix(m))), "out")
    })
}

/// Cosine matrix of `n` image and `n` text features, each `dim` long and
/// stored row-major.
///
/// # Safety
/// `images` and `texts` must point to `n * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llmda_similarity_matrix_from_features(
    images: *const f64,
    texts: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut LlmdaSimilarityMatrix,
) -> LlmdaStatus {
    guard(|| {
        if dim == 0 {
            return Err((LlmdaStatus::InvalidArgument, "dim must be positive".to_string()));
        }
        let len = n.checked_mul(dim).ok_or((LlmdaStatus::InvalidArgument, "n * dim is too large".to_string()))?;
        let features = |p, what| -> FfiResult<Vec<FeatureVector>> {
            slice(p, len, what)?.chunks(dim).map(|c| math(FeatureVector::new(c.to_vec()))).collect()
        };
        let m = math(mixed_similarity_matrix(&features(images, "images")?, &features(texts, "texts")?))?;
        write_out(out, Box::into_raw(Box::new(LlmdaSimilarityMatrix(m))), "out")
    })
}

/// # Safety
/// `m` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn llmda_similarity_matrix_free(m: *mut LlmdaSimilarityMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Side length of the matrix, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn llmda_similarity_matrix_n(m: *const LlmdaSimilarityMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n())
}

/// Image-to-text contrastive loss.
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llmda_loss_v2t(m: *const LlmdaSimilarityMatrix, tau: f64, out: *mut f64) -> LlmdaStatus {
    guard(|| write_out(out, math(contrastive_loss_v2t(matrix(m)?, tau))?, "out"))
}

/// Text-to-image contrastive loss.
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llmda_loss_t2v(m: *const LlmdaSimilarityMatrix, tau: f64, out: *mut f64) -> LlmdaStatus {
    guard(|| write_out(out, math(contrastive_loss_t2v(matrix(m)?, tau))?, "out"))
}

/// Writes the row-major gradient of the summed loss into `out`, which must
/// hold at least `n * n` doubles.
///
/// # Safety
/// `m` must be a live handle; `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn llmda_loss_gradient(
    m: *const LlmdaSimilarityMatrix,
    tau: f64,
    out: *mut f64,
    out_len: usize,
) -> LlmdaStatus {
    guard(|| {
        let g = math(loss_gradient(matrix(m)?, tau))?;
        if out_len < g.len() {
            return Err((LlmdaStatus::BufferTooSmall, format!("need {} doubles, got {out_len}", g.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(g.as_ptr(), out, g.len());
        Ok(())
    })
}

unsafe fn ground_truth(query_ids: *const u64, gallery_ids: *const u64, n: usize) -> FfiResult<GroundTruth> {
    let q = slice(query_ids, n, "query_ids")?;
    let g = slice(gallery_ids, n, "gallery_ids")?;
    math(GroundTruth::from_identities(q, g))
}

/// Text-to-image Rank-K in percent. Gallery item `j` is relevant to query
/// `i` when `gallery_ids[j] == query_ids[i]`.
///
/// # Safety
/// `m` must be a live handle; the id arrays must hold `n` entries each.
#[no_mangle]
pub unsafe extern "C" fn llmda_rank_k(
    m: *const LlmdaSimilarityMatrix,
    query_ids: *const u64,
    gallery_ids: *const u64,
    k: usize,
    out: *mut f64,
) -> LlmdaStatus {
    guard(|| {
        let s = matrix(m)?;
        let gt = ground_truth(query_ids, gallery_ids, s.n())?;
        write_out(out, math(rank_k(s, &gt, k))?, "out")
    })
}

/// Text-to-image mean average precision in percent.
///
/// # Safety
/// As for [`llmda_rank_k`].
#[no_mangle]
pub unsafe extern "C" fn llmda_mean_average_precision(
    m: *const LlmdaSimilarityMatrix,
    query_ids: *const u64,
    gallery_ids: *const u64,
    out: *mut f64,
) -> LlmdaStatus {
    guard(|| {
        let s = matrix(m)?;
        let gt = ground_truth(query_ids, gallery_ids, s.n())?;
        write_out(out, math(mean_average_precision(s, &gt))?, "out")
    })
}

/// Balanced sampling choice for one caption. `out_augmented` receives 1 when
/// the augmented text is selected; `out_r` (optional) receives the draw.
///
/// # Safety
/// `text_id` must be a NUL-terminated string; `out_augmented` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llmda_bss_select(
    text_id: *const c_char,
    epoch: u32,
    beta: f64,
    seed: u64,
    has_augmentation: bool,
    out_augmented: *mut bool,
    out_r: *mut f64,
) -> LlmdaStatus {
    guard(|| {
        let id = string(text_id, "text_id")?;
        if !(0.0..=1.0).contains(&beta) {
            return Err((LlmdaStatus::InvalidArgument, format!("beta must lie in [0, 1], got {beta}")));
        }
        let choice = bss_select(id, epoch, beta, seed, has_augmentation);
        write_out(out_augmented, choice.selected == TextSource::Augmented, "out_augmented")?;
        if !out_r.is_null() {
            out_r.write(choice.r);
        }
        Ok(())
    })
}

/// Cleans a raw completion. On success `*out` is a new string; on
/// rejection the status is `Rejected` and `*out` is null.
///
/// # Safety
/// `raw` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llmda_sanitize_response(raw: *const c_char, out: *mut *mut c_char) -> LlmdaStatus {
    guard(|| {
        let raw = string(raw, "raw")?;
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(ptr::null_mut());
        match sanitize_response(raw) {
            Ok(clean) => {
                out.write(into_c_string(clean)?);
                Ok(())
            }
            Err(r @ (SanitizeRejection::Empty | SanitizeRejection::NotEnoughLetters)) => {
                Err((LlmdaStatus::Rejected, r.to_string()))
            }
        }
    })
}

/// Parses annotation bytes.
///
/// # Safety
/// `data` must point to `len` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llmda_corpus_parse(
    data: *const u8,
    len: usize,
    format: LlmdaCorpusFormat,
    out: *mut *mut LlmdaCorpus,
) -> LlmdaStatus {
    guard(|| {
        let format = match format {
            LlmdaCorpusFormat::CuhkPedesJson => CorpusFormat::CuhkPedesJson,
            LlmdaCorpusFormat::CanonicalJsonl => CorpusFormat::CanonicalJsonl,
        };
        let records =
            parse_annotations(slice(data, len, "data")?, format).map_err(|e| (LlmdaStatus::Corpus, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(LlmdaCorpus(records))), "out")
    })
}

/// # Safety
/// `c` must be null or a live corpus handle.
#[no_mangle]
pub unsafe extern "C" fn llmda_corpus_free(c: *mut LlmdaCorpus) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Number of caption records, or 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live corpus handle.
#[no_mangle]
pub unsafe extern "C" fn llmda_corpus_len(c: *const LlmdaCorpus) -> usize {
    c.as_ref().map_or(0, |c| c.0.len())
}

/// Serializes the corpus as canonical JSONL into a new string.
///
/// # Safety
/// `c` must be a live corpus handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llmda_corpus_write_manifest(c: *const LlmdaCorpus, out: *mut *mut c_char) -> LlmdaStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("corpus"))?;
        let bytes = write_manifest(&c.0).map_err(|e| (LlmdaStatus::Corpus, e.to_string()))?;
        let text = String::from_utf8(bytes).map_err(|e| (LlmdaStatus::InvalidUtf8, e.to_string()))?;
        write_out(out, into_c_string(text)?, "out")
    })
}
