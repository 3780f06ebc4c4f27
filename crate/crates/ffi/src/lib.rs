//! C ABI surface for the treesearch library.
//!
//! Models and result sets are opaque handles; every fallible call returns a
//! `TsStatus` code and leaves a message retrievable through
//! [`ts_last_error_message`] on the calling thread. Strings returned through
//! out-pointers are owned by the caller and must be released with
//! [`ts_string_free`].

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::cell::RefCell;
use std::ptr;

use treesearch::{
    repetition_penalty_hook, run_search, CompletionResult, Error, LanguageModel, NGramModel,
    SamplerKind, ScorerKind, ScriptedModel, SearchConfig, UniformModel,
};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    TsOk = 0,
    TsErrNullPointer = 1,
    TsErrInvalidArgument = 2,
    TsErrParse = 3,
    TsErrIo = 4,
    TsErrRuntime = 5,
}

/// Opaque handle to an immutable next-token model.
pub struct TsModel {
    inner: Box<dyn LanguageModel>,
}

/// Opaque handle to the outcome of one search run.
pub struct TsResultSet {
    results: Vec<CompletionResult>,
    tree_json: CString,
    nodes_created: usize,
    iterations_run: usize,
}

/// Scorer selector for `TsSearchParams`: 0 = geometric mean,
/// 1 = sum of log probabilities, 2 = arithmetic mean.
pub type TsScorer = i32;

/// Sampler selector for `TsSearchParams`: 0 = weighted by normalized
/// confidence, 1 = top-k leaves, 2 = hybrid.
pub type TsSampler = i32;

/// Search configuration passed by value. Obtain defaults from
/// `ts_search_params_default` and override fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TsSearchParams {
    pub scorer: TsScorer,
    pub sampler: TsSampler,
    pub k: usize,
    pub batch: usize,
    pub max_depth: usize,
    pub iterations: usize,
    pub max_nodes: usize,
    pub seed: u64,
    pub top_n: usize,
    pub hybrid_pool_factor: usize,
    pub workers: usize,
    /// Longest allowed identical-token run before down-scoring; 0 disables
    /// the repetition-penalty evaluator.
    pub repetition_max_run: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
}

fn status_of(err: &Error) -> TsStatus {
    match err {
        Error::InvalidInput(_) | Error::EvaluatorRange { .. } => TsStatus::TsErrInvalidArgument,
        Error::Parse { .. } | Error::Json(_) => TsStatus::TsErrParse,
        Error::Io(_) => TsStatus::TsErrIo,
        _ => TsStatus::TsErrRuntime,
    }
}

fn fail(err: Error) -> TsStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn guarded(f: impl FnOnce() -> TsStatus) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            TsStatus::TsErrRuntime
        }
    }
}

/// Message for the most recent error on this thread. The pointer stays valid
/// until the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn ts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn read_utf8<'a>(ptr: *const c_char) -> Result<&'a str, TsStatus> {
    if ptr.is_null() {
        set_error("null string pointer");
        return Err(TsStatus::TsErrNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string is not valid UTF-8");
        TsStatus::TsErrInvalidArgument
    })
}

fn install_model(out: *mut *mut TsModel, model: Box<dyn LanguageModel>) -> TsStatus {
    if out.is_null() {
        set_error("null output pointer");
        return TsStatus::TsErrNullPointer;
    }
    unsafe { *out = Box::into_raw(Box::new(TsModel { inner: model })) };
    TsStatus::TsOk
}

/// Creates a uniform model over a synthetic vocabulary `t0..t{size-1}`.
///
/// # Safety
/// `out` must be a valid pointer to a `TsModel*` slot.
#[no_mangle]
pub unsafe extern "C" fn ts_model_uniform(size: usize, out: *mut *mut TsModel) -> TsStatus {
    guarded(|| match UniformModel::with_size(size) {
        Ok(model) => install_model(out, Box::new(model)),
        Err(e) => fail(e),
    })
}

/// Loads a scripted model from its JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated UTF-8 string; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn ts_model_scripted_from_json(
    json: *const c_char,
    out: *mut *mut TsModel,
) -> TsStatus {
    guarded(|| {
        let json = match read_utf8(json) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match ScriptedModel::from_json(json) {
            Ok(model) => install_model(out, Box::new(model)),
            Err(e) => fail(e),
        }
    })
}

/// Loads a previously trained n-gram model from its JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated UTF-8 string; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn ts_model_ngram_from_json(
    json: *const c_char,
    out: *mut *mut TsModel,
) -> TsStatus {
    guarded(|| {
        let json = match read_utf8(json) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match NGramModel::from_json(json) {
            Ok(model) => install_model(out, Box::new(model)),
            Err(e) => fail(e),
        }
    })
}

/// Trains an add-alpha smoothed n-gram model on whitespace-delimited text.
///
/// # Safety
/// `corpus` must be a NUL-terminated UTF-8 string; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn ts_model_ngram_train(
    corpus: *const c_char,
    order: usize,
    alpha: f64,
    out: *mut *mut TsModel,
) -> TsStatus {
    guarded(|| {
        let corpus = match read_utf8(corpus) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match NGramModel::train_text(corpus, order, alpha) {
            Ok(model) => install_model(out, Box::new(model)),
            Err(e) => fail(e),
        }
    })
}

/// Vocabulary size of the model, or 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle from a `ts_model_*` constructor or null.
#[no_mangle]
pub unsafe extern "C" fn ts_model_vocab_size(model: *const TsModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (&*model).inner.vocabulary().size()
}

/// Resolves a token string to its id. Returns `TsOk` and writes the id, or
/// `TsErrInvalidArgument` for unknown tokens.
///
/// # Safety
/// All pointers must be valid; `token` NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn ts_model_token_id(
    model: *const TsModel,
    token: *const c_char,
    out: *mut usize,
) -> TsStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            set_error("null pointer");
            return TsStatus::TsErrNullPointer;
        }
        let token = match read_utf8(token) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match (&*model).inner.vocabulary().id_of(token) {
            Some(id) => {
                *out = id;
                TsStatus::TsOk
            }
            None => {
                set_error("unknown token");
                TsStatus::TsErrInvalidArgument
            }
        }
    })
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must come from a `ts_model_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ts_model_free(model: *mut TsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Fills `out` with the library defaults.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_search_params_default(out: *mut TsSearchParams) -> TsStatus {
    if out.is_null() {
        set_error("null output pointer");
        return TsStatus::TsErrNullPointer;
    }
    let d = SearchConfig::default();
    *out = TsSearchParams {
        scorer: 0,
        sampler: 2,
        k: d.k,
        batch: d.batch,
        max_depth: d.max_depth,
        iterations: d.iterations,
        max_nodes: d.max_nodes,
        seed: d.seed,
        top_n: d.top_n,
        hybrid_pool_factor: d.hybrid_pool_factor,
        workers: d.workers,
        repetition_max_run: 0,
    };
    TsStatus::TsOk
}

fn config_from_params(params: &TsSearchParams) -> Result<SearchConfig, Error> {
    let scorer = match params.scorer {
        0 => ScorerKind::GeometricMean,
        1 => ScorerKind::SumLogprob,
        2 => ScorerKind::ArithmeticMean,
        other => return Err(Error::InvalidInput(format!("unknown scorer {other}"))),
    };
    let sampler = match params.sampler {
        0 => SamplerKind::NormalizedConfidence,
        1 => SamplerKind::TopKLeaves,
        2 => SamplerKind::Hybrid,
        other => return Err(Error::InvalidInput(format!("unknown sampler {other}"))),
    };
    let evaluator = match params.repetition_max_run {
        0 => None,
        r if r >= 2 => Some(repetition_penalty_hook(r, 3)),
        r => {
            return Err(Error::InvalidInput(format!(
                "repetition_max_run must be 0 or >= 2, got {r}"
            )))
        }
    };
    Ok(SearchConfig {
        scorer,
        sampler,
        k: params.k,
        batch: params.batch,
        max_depth: params.max_depth,
        iterations: params.iterations,
        max_nodes: params.max_nodes,
        seed: params.seed,
        evaluator,
        top_n: params.top_n,
        hybrid_pool_factor: params.hybrid_pool_factor,
        workers: params.workers,
    })
}

/// Runs a search and hands back an opaque result set.
///
/// # Safety
/// `model` and `params` must be live; `prompt` must point to `prompt_len`
/// token ids (may be null when `prompt_len` is 0); `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ts_search_run(
    model: *const TsModel,
    prompt: *const usize,
    prompt_len: usize,
    params: *const TsSearchParams,
    out: *mut *mut TsResultSet,
) -> TsStatus {
    guarded(|| {
        if model.is_null() || params.is_null() || out.is_null() {
            set_error("null pointer");
            return TsStatus::TsErrNullPointer;
        }
        if prompt.is_null() && prompt_len > 0 {
            set_error("null prompt with nonzero length");
            return TsStatus::TsErrNullPointer;
        }
        let prompt: &[usize] = if prompt_len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(prompt, prompt_len)
        };
        let config = match config_from_params(&*params) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        match run_search((&*model).inner.as_ref(), prompt, &config) {
            Ok((tree, results, stats)) => {
                let tree_json = match tree.to_json() {
                    Ok(json) => CString::new(json).unwrap_or_default(),
                    Err(e) => return fail(e),
                };
                *out = Box::into_raw(Box::new(TsResultSet {
                    results,
                    tree_json,
                    nodes_created: stats.nodes_created,
                    iterations_run: stats.iterations_run,
                }));
                TsStatus::TsOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of ranked completions in the set; 0 for null.
///
/// # Safety
/// `set` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ts_results_len(set: *const TsResultSet) -> usize {
    if set.is_null() {
        0
    } else {
        (&*set).results.len()
    }
}

/// Nodes created by the run that produced this set.
///
/// # Safety
/// `set` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ts_results_nodes_created(set: *const TsResultSet) -> usize {
    if set.is_null() {
        0
    } else {
        (&*set).nodes_created
    }
}

/// Iterations executed by the run that produced this set.
///
/// # Safety
/// `set` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ts_results_iterations_run(set: *const TsResultSet) -> usize {
    if set.is_null() {
        0
    } else {
        (&*set).iterations_run
    }
}

/// Borrows the token ids of completion `index`. The pointer is owned by the
/// result set and stays valid until the set is freed.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ts_result_tokens(
    set: *const TsResultSet,
    index: usize,
    out_ptr: *mut *const usize,
    out_len: *mut usize,
) -> TsStatus {
    if set.is_null() || out_ptr.is_null() || out_len.is_null() {
        set_error("null pointer");
        return TsStatus::TsErrNullPointer;
    }
    match (&*set).results.get(index) {
        Some(r) => {
            *out_ptr = r.tokens.as_ptr();
            *out_len = r.tokens.len();
            TsStatus::TsOk
        }
        None => {
            set_error("result index out of range");
            TsStatus::TsErrInvalidArgument
        }
    }
}

/// Linear-space confidence score of completion `index`; NaN on bad input.
///
/// # Safety
/// `set` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ts_result_score(set: *const TsResultSet, index: usize) -> f64 {
    if set.is_null() {
        return f64::NAN;
    }
    (&*set)
        .results
        .get(index)
        .map_or(f64::NAN, |r| r.score_linear)
}

/// 1 when completion `index` ended at eos, 0 otherwise or on bad input.
///
/// # Safety
/// `set` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ts_result_terminal(set: *const TsResultSet, index: usize) -> i32 {
    if set.is_null() {
        return 0;
    }
    (&*set)
        .results
        .get(index)
        .map_or(0, |r| i32::from(r.terminal))
}

/// Copies the rendered text of completion `index` into a fresh string the
/// caller must release with [`ts_string_free`].
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ts_result_text(
    set: *const TsResultSet,
    index: usize,
    out: *mut *mut c_char,
) -> TsStatus {
    if set.is_null() || out.is_null() {
        set_error("null pointer");
        return TsStatus::TsErrNullPointer;
    }
    match (&*set).results.get(index) {
        Some(r) => match CString::new(r.text.clone()) {
            Ok(s) => {
                *out = s.into_raw();
                TsStatus::TsOk
            }
            Err(_) => {
                set_error("text contains an interior NUL");
                TsStatus::TsErrRuntime
            }
        },
        None => {
            set_error("result index out of range");
            TsStatus::TsErrInvalidArgument
        }
    }
}

/// Borrows the JSON rendering of the grown search tree. The pointer is owned
/// by the result set and stays valid until the set is freed.
///
/// # Safety
/// `set` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ts_results_tree_json(set: *const TsResultSet) -> *const c_char {
    if set.is_null() {
        return ptr::null();
    }
    (&*set).tree_json.as_ptr()
}

/// Releases a result set. Null is a no-op.
///
/// # Safety
/// `set` must come from `ts_search_run` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ts_results_free(set: *mut TsResultSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Releases a string returned through an out-pointer. Null is a no-op.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
