//! C ABI over the `debiasrank` toolkit.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a `DR_*` status
//! code; the message of the last failure on the calling thread is available
//! from [`dr_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use debiasrank::data::{leave_one_out_split, read_split, ImplicitDataset, SplitDataset};
use debiasrank::eval::{evaluate_held_out, top_k_excluding, EvalConfig, HeldOut, Protocol};
use debiasrank::exposure::popularity;
use debiasrank::model::{Hyperparams, LossKind};
use debiasrank::train::{fit, Checkpoint, TrainConfig, DEFAULT_PATIENCE};
use debiasrank::Error;

pub const DR_OK: i32 = 0;
pub const DR_ERR_NULL: i32 = 1;
pub const DR_ERR_IO: i32 = 2;
pub const DR_ERR_FORMAT: i32 = 3;
pub const DR_ERR_INVALID_ARGUMENT: i32 = 4;
pub const DR_ERR_DIMENSION: i32 = 5;
pub const DR_ERR_DIVERGED: i32 = 6;
pub const DR_ERR_NO_USERS: i32 = 7;
pub const DR_ERR_PANIC: i32 = 8;

pub const DR_LOSS_BPR: u32 = 0;
pub const DR_LOSS_DPR: u32 = 1;
pub const DR_LOSS_DPR_MINUS: u32 = 2;
pub const DR_LOSS_UBPR: u32 = 3;
pub const DR_LOSS_RELMF: u32 = 4;
pub const DR_LOSS_MFDU: u32 = 5;

pub const DR_PROTOCOL_FULL_RANK: u32 = 0;
pub const DR_PROTOCOL_SAMPLED99: u32 = 1;

/// Split dataset handle.
pub struct DrDataset {
    split: SplitDataset,
}

/// Trained model handle.
pub struct DrModel {
    checkpoint: Checkpoint,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DrTrainOptions {
    /// One of the `DR_LOSS_*` constants.
    pub loss: u32,
    pub dim: u32,
    pub epochs: u32,
    pub batch_size: u32,
    pub num_negatives: u32,
    pub patience: u32,
    pub lr: f64,
    pub l2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DrReport {
    pub recall: f64,
    pub ndcg: f64,
    pub arp: f64,
    pub tap: f64,
    pub users_evaluated: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_for(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => DR_ERR_IO,
        Error::Format { .. } | Error::ColumnOutOfRange { .. } | Error::NoValidRecords(_) | Error::Config(_) => {
            DR_ERR_FORMAT
        }
        Error::InvalidArgument(_) | Error::IdOutOfRange { .. } | Error::InfeasibleDegrees(_) => DR_ERR_INVALID_ARGUMENT,
        Error::DimensionMismatch { .. } => DR_ERR_DIMENSION,
        Error::Diverged(_) | Error::NonFiniteGradient { .. } | Error::DegenerateExposure => DR_ERR_DIVERGED,
        Error::NoEvaluableUsers => DR_ERR_NO_USERS,
    }
}

struct Fail(i32, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(code_for(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DR_ERR_NULL, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(DR_ERR_INVALID_ARGUMENT, msg.into())
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DR_OK,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            DR_ERR_PANIC
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn loss_from(code: u32) -> Result<LossKind, Fail> {
    Ok(match code {
        DR_LOSS_BPR => LossKind::Bpr,
        DR_LOSS_DPR => LossKind::Dpr,
        DR_LOSS_DPR_MINUS => LossKind::DprMinus,
        DR_LOSS_UBPR => LossKind::Ubpr,
        DR_LOSS_RELMF => LossKind::Relmf,
        DR_LOSS_MFDU => LossKind::Mfdu,
        other => return Err(invalid(format!("unknown loss code {other}"))),
    })
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn dr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a split directory written by `debiasrank ingest`.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_dataset_load(path: *const c_char, out: *mut *mut DrDataset) -> i32 {
    guard(|| {
        let dir = path_arg(path)?;
        let (split, _) = read_split(dir)?;
        put(out, DrDataset { split })
    })
}

/// Builds a leave-one-out split from `len` positive `(users[k], items[k])` pairs.
///
/// # Safety
/// `users` and `items` must point to `len` readable values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dr_dataset_from_pairs(
    num_users: u32,
    num_items: u32,
    users: *const u32,
    items: *const u32,
    len: usize,
    split_seed: u64,
    out: *mut *mut DrDataset,
) -> i32 {
    guard(|| {
        if len > 0 && (users.is_null() || items.is_null()) {
            return Err(null("pair arrays"));
        }
        let (us, is) = if len == 0 {
            (&[][..], &[][..])
        } else {
            (std::slice::from_raw_parts(users, len), std::slice::from_raw_parts(items, len))
        };
        let pairs = us.iter().zip(is).map(|(&u, &i)| (u as usize, i as usize));
        let ds = ImplicitDataset::new(num_users as usize, num_items as usize, pairs)?;
        let split = leave_one_out_split(&ds, split_seed)?;
        put(out, DrDataset { split })
    })
}

/// # Safety
/// `ds` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dr_dataset_num_users(ds: *const DrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.split.num_users())
}

/// # Safety
/// `ds` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dr_dataset_num_items(ds: *const DrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.split.num_items())
}

/// Number of training positives.
///
/// # Safety
/// `ds` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dr_dataset_num_train(ds: *const DrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.split.train.num_positives())
}

/// # Safety
/// `ds` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dr_dataset_free(ds: *mut DrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fills `opts` with the library defaults.
///
/// # Safety
/// `opts` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_train_options_default(opts: *mut DrTrainOptions) -> i32 {
    guard(|| {
        let o = opts.as_mut().ok_or_else(|| null("options"))?;
        let hp = Hyperparams::default();
        *o = DrTrainOptions {
            loss: DR_LOSS_DPR,
            dim: hp.dim as u32,
            epochs: hp.epochs as u32,
            batch_size: hp.batch_size as u32,
            num_negatives: hp.num_negatives as u32,
            patience: DEFAULT_PATIENCE as u32,
            lr: hp.lr,
            l2: hp.l2,
            alpha: hp.alpha,
            beta: hp.beta,
            seed: hp.seed,
        };
        Ok(())
    })
}

/// Trains on the dataset's training positives with early stopping on its
/// validation items.
///
/// # Safety
/// `ds` and `opts` must be valid; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_train(ds: *const DrDataset, opts: *const DrTrainOptions, out: *mut *mut DrModel) -> i32 {
    guard(|| {
        let d = borrow(ds, "dataset")?;
        let o = borrow(opts, "options")?;
        let hp = Hyperparams {
            loss: loss_from(o.loss)?,
            dim: o.dim as usize,
            epochs: o.epochs as usize,
            batch_size: o.batch_size as usize,
            num_negatives: o.num_negatives as usize,
            lr: o.lr,
            l2: o.l2,
            alpha: o.alpha,
            beta: o.beta,
            seed: o.seed,
            ..Hyperparams::default()
        };
        let cfg = TrainConfig { patience: o.patience as usize, ..TrainConfig::with_hp(hp.clone()) };
        let outcome = fit(&d.split, &cfg)?;
        put(
            out,
            DrModel {
                checkpoint: Checkpoint { hp, best_epoch: outcome.best_epoch, params: outcome.params },
            },
        )
    })
}

/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_model_load(path: *const c_char, out: *mut *mut DrModel) -> i32 {
    guard(|| {
        let p = path_arg(path)?;
        put(out, DrModel { checkpoint: Checkpoint::load(p)? })
    })
}

/// # Safety
/// `model` must be valid and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dr_model_save(model: *const DrModel, path: *const c_char) -> i32 {
    guard(|| {
        let m = borrow(model, "model")?;
        m.checkpoint.save(path_arg(path)?)?;
        Ok(())
    })
}

/// 1-based epoch whose parameters the model holds.
///
/// # Safety
/// `model` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dr_model_best_epoch(model: *const DrModel) -> u32 {
    model.as_ref().map_or(0, |m| m.checkpoint.best_epoch as u32)
}

/// # Safety
/// `model` must be valid and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_model_score(model: *const DrModel, user: u32, item: u32, out: *mut f64) -> i32 {
    guard(|| {
        let m = borrow(model, "model")?;
        let o = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *o = m.checkpoint.params.score(user as usize, item as usize)?;
        Ok(())
    })
}

/// Writes up to `k` item indices for `user`, best first, skipping the user's
/// training positives in `ds`. `out_len` receives the number written.
///
/// # Safety
/// `model` and `ds` must be valid; `out_items` must have room for `k` values.
#[no_mangle]
pub unsafe extern "C" fn dr_model_top_k(
    model: *const DrModel,
    ds: *const DrDataset,
    user: u32,
    k: usize,
    out_items: *mut u32,
    out_len: *mut usize,
) -> i32 {
    guard(|| {
        let m = borrow(model, "model")?;
        let d = borrow(ds, "dataset")?;
        if out_items.is_null() || out_len.is_null() {
            return Err(null("output pointer"));
        }
        let p = &m.checkpoint.params;
        if p.num_items != d.split.num_items() {
            return Err(Fail::from(Error::DimensionMismatch {
                what: "model items",
                expected: d.split.num_items(),
                found: p.num_items,
            }));
        }
        let u = user as usize;
        let scores = p.score_all(u)?;
        let list = top_k_excluding(&scores, k, |i| d.split.train.contains(u, i));
        let dest = std::slice::from_raw_parts_mut(out_items, k);
        for (slot, &i) in dest.iter_mut().zip(&list) {
            *slot = i as u32;
        }
        *out_len = list.len();
        Ok(())
    })
}

/// Scores the test items (`validation` = 0) or validation items (non-zero).
///
/// # Safety
/// `model`, `ds` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dr_evaluate(
    model: *const DrModel,
    ds: *const DrDataset,
    k: usize,
    protocol: u32,
    seed: u64,
    validation: i32,
    out: *mut DrReport,
) -> i32 {
    guard(|| {
        let m = borrow(model, "model")?;
        let d = borrow(ds, "dataset")?;
        let o = out.as_mut().ok_or_else(|| null("output pointer"))?;
        let protocol = match protocol {
            DR_PROTOCOL_FULL_RANK => Protocol::FullRank,
            DR_PROTOCOL_SAMPLED99 => Protocol::Sampled99,
            other => return Err(invalid(format!("unknown protocol code {other}"))),
        };
        let cfg = EvalConfig { k, protocol, seed, ..EvalConfig::default() };
        let which = if validation != 0 { HeldOut::Validation } else { HeldOut::Test };
        let pop = popularity(&d.split.train);
        let r = evaluate_held_out(&m.checkpoint.params, &d.split, which, &cfg, &pop)?;
        *o = DrReport {
            recall: r.recall,
            ndcg: r.ndcg,
            arp: r.arp,
            tap: r.tap,
            users_evaluated: r.users_evaluated as u64,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dr_model_free(model: *mut DrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
