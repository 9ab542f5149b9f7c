//! C ABI over `tdpmix`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`TdpmixStatus`]; on failure a description is available from
//! [`tdpmix_last_error`] on the same thread until the next failing call.
//! Panics are caught at the boundary and reported as
//! [`TdpmixStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tdpmix::ba::{BaConfig, BaState};
use tdpmix::data::checkpoint::Checkpoint;
use tdpmix::data::{self, Dataset, Format};
use tdpmix::jac::{JacConfig, JacState, PlugIn, Sampler};
use tdpmix::metrics;
use tdpmix::model::{DataModel, Priors};
use tdpmix::{Error, Hyperparams, Shape};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TdpmixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Unreadable or malformed input file.
    Data = 4,
    Checkpoint = 5,
    /// Numerical or sampler failure during a run.
    Runtime = 6,
    /// Caller buffer shorter than the result.
    BufferTooSmall = 7,
    Panic = 8,
}

/// Item layout for in-memory datasets.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TdpmixShape {
    Vector = 0,
    Point2 = 1,
    Curve = 2,
    Image = 3,
}

/// Sampler settings for joint runs; start from [`tdpmix_jac_config_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdpmixJacConfig {
    /// 1 = blocked optimization, 2 = importance sampling.
    pub sampler: u32,
    /// Proposals per item for the importance sampler.
    pub samples: usize,
    /// 0 = posterior modes, 1 = posterior predictive.
    pub plug_in: u32,
    pub resample_gamma: bool,
}

pub struct TdpmixDataset {
    inner: Dataset,
}

pub struct TdpmixJac {
    state: JacState,
    shape: Shape,
}

pub struct TdpmixBa {
    state: BaState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> TdpmixStatus {
    match e {
        Error::DimensionMismatch { .. } => TdpmixStatus::DimensionMismatch,
        Error::InvalidArgument(_) | Error::NonFinite | Error::NonMonotoneWarp(_) | Error::NotInvertible(_) => {
            TdpmixStatus::InvalidArgument
        }
        Error::Format { .. } | Error::Io { .. } => TdpmixStatus::Data,
        Error::Checkpoint(_) => TdpmixStatus::Checkpoint,
        _ => TdpmixStatus::Runtime,
    }
}

/// Internal failure carrying its status.
struct Fail(TdpmixStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: TdpmixStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TdpmixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TdpmixStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TdpmixStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(TdpmixStatus::NullPointer, format!("{what} is null")))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(TdpmixStatus::NullPointer, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return fail(TdpmixStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(TdpmixStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(TdpmixStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, capacity: usize, needed: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return fail(TdpmixStatus::NullPointer, format!("{what} is null"));
    }
    if capacity < needed {
        return fail(
            TdpmixStatus::BufferTooSmall,
            format!("{what} holds {capacity} values, {needed} needed"),
        );
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return fail(TdpmixStatus::NullPointer, format!("{what} is null"));
    }
    out.write(value);
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tdpmix_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tdpmix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a dataset. `format` is `csv-curves`, `csv-points`, `pgm-dir`,
/// `idx`, or null to guess from the path. `labels` may be null.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_dataset_load(
    path: *const c_char,
    format: *const c_char,
    labels: *const c_char,
    out: *mut *mut TdpmixDataset,
) -> TdpmixStatus {
    guard(|| {
        let path = data::resolve_path(Path::new(text(path, "path")?));
        let format = if format.is_null() {
            Format::detect(&path)
        } else {
            Format::from_name(text(format, "format")?)?
        };
        let labels = if labels.is_null() {
            None
        } else {
            Some(data::resolve_path(Path::new(text(labels, "labels")?)))
        };
        let inner = data::load(&path, format, labels.as_deref())?;
        write(out, Box::into_raw(Box::new(TdpmixDataset { inner })), "out")
    })
}

/// Builds a dataset from `n_items` row-major items of equal length.
/// `width`/`height` describe images; for other shapes `width` is the item
/// length and `height` is ignored. `labels` may be null.
///
/// # Safety
/// `values` must hold `n_items * item length` doubles, `labels` (if not
/// null) `n_items` entries, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_dataset_new(
    values: *const f64,
    n_items: usize,
    shape: TdpmixShape,
    width: usize,
    height: usize,
    labels: *const usize,
    out: *mut *mut TdpmixDataset,
) -> TdpmixStatus {
    guard(|| {
        let shape = match shape {
            TdpmixShape::Vector => Shape::Vector { len: width },
            TdpmixShape::Point2 => Shape::Point2,
            TdpmixShape::Curve => Shape::Curve { len: width },
            TdpmixShape::Image => Shape::Image { width, height },
        };
        let len = shape.len();
        if len == 0 {
            return fail(TdpmixStatus::InvalidArgument, "items must have at least one value");
        }
        let total = n_items
            .checked_mul(len)
            .ok_or_else(|| Fail(TdpmixStatus::InvalidArgument, "dataset size overflows".into()))?;
        let flat = slice(values, total, "values")?;
        let items = flat.chunks(len).map(<[f64]>::to_vec).collect();
        let labels = if labels.is_null() {
            None
        } else {
            Some(slice(labels, n_items, "labels")?.to_vec())
        };
        let inner = Dataset::new(shape, items, labels)?;
        write(out, Box::into_raw(Box::new(TdpmixDataset { inner })), "out")
    })
}

/// # Safety
/// `dataset` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_dataset_free(dataset: *mut TdpmixDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Item count and values per item.
///
/// # Safety
/// `dataset` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_dataset_size(
    dataset: *const TdpmixDataset,
    n_items: *mut usize,
    item_len: *mut usize,
) -> TdpmixStatus {
    guard(|| {
        let d = &borrow(dataset, "dataset")?.inner;
        write(n_items, d.len(), "n_items")?;
        write(item_len, d.shape.len(), "item_len")
    })
}

fn priors_for(d: &Dataset, family: &tdpmix::TransformFamily) -> Result<Priors, Fail> {
    Ok(Priors::resolve(
        &Hyperparams::default(),
        DataModel::for_shape(d.shape),
        &d.items,
        d.shape.len(),
        family,
    )?)
}

#[no_mangle]
pub extern "C" fn tdpmix_jac_config_default() -> TdpmixJacConfig {
    let c = JacConfig::default();
    TdpmixJacConfig {
        sampler: match c.sampler {
            Sampler::Blocked => 1,
            Sampler::Importance => 2,
        },
        samples: c.samples,
        plug_in: match c.plug_in {
            PlugIn::Mode => 0,
            PlugIn::Predictive => 1,
        },
        resample_gamma: c.resample_gamma,
    }
}

fn jac_config(c: &TdpmixJacConfig) -> Result<JacConfig, Fail> {
    let sampler = match c.sampler {
        1 => Sampler::Blocked,
        2 => Sampler::Importance,
        s => return fail(TdpmixStatus::InvalidArgument, format!("sampler must be 1 or 2, got {s}")),
    };
    let plug_in = match c.plug_in {
        0 => PlugIn::Mode,
        1 => PlugIn::Predictive,
        p => return fail(TdpmixStatus::InvalidArgument, format!("plug_in must be 0 or 1, got {p}")),
    };
    if c.samples == 0 {
        return fail(TdpmixStatus::InvalidArgument, "samples must be positive");
    }
    Ok(JacConfig {
        sampler,
        samples: c.samples,
        plug_in,
        resample_gamma: c.resample_gamma,
        ..JacConfig::default()
    })
}

/// Starts a joint run with every item in one cluster. `family` may be null
/// for the dataset's default family.
///
/// # Safety
/// `dataset` must be a live handle, `family` null or NUL-terminated, and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_jac_new(
    dataset: *const TdpmixDataset,
    family: *const c_char,
    gamma: f64,
    seed: u64,
    out: *mut *mut TdpmixJac,
) -> TdpmixStatus {
    guard(|| {
        let d = &borrow(dataset, "dataset")?.inner;
        let name = if family.is_null() { None } else { Some(text(family, "family")?) };
        let family = d.family(name)?;
        let priors = priors_for(d, &family)?;
        let h = Hyperparams::default();
        let state = JacState::new(d.items.clone(), family, priors, gamma, (h.gamma_a, h.gamma_b), seed)?;
        write(out, Box::into_raw(Box::new(TdpmixJac { state, shape: d.shape })), "out")
    })
}

/// Assigns the items of `dataset` against the clusters stored in a
/// checkpoint file. Items stay unassigned until the first iteration.
///
/// # Safety
/// As [`tdpmix_jac_new`].
#[no_mangle]
pub unsafe extern "C" fn tdpmix_jac_from_checkpoint(
    path: *const c_char,
    dataset: *const TdpmixDataset,
    seed: u64,
    out: *mut *mut TdpmixJac,
) -> TdpmixStatus {
    guard(|| {
        let d = &borrow(dataset, "dataset")?.inner;
        let ck = Checkpoint::load(&data::resolve_path(Path::new(text(path, "path")?)))?;
        if ck.shape != d.shape {
            return fail(
                TdpmixStatus::DimensionMismatch,
                format!("checkpoint holds {:?} items, dataset has {:?}", ck.shape, d.shape),
            );
        }
        let state = ck.into_state(d.items.clone(), seed)?;
        write(out, Box::into_raw(Box::new(TdpmixJac { state, shape: d.shape })), "out")
    })
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_jac_free(model: *mut TdpmixJac) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Seeds one locked cluster per distinct label: `items[k]` carries
/// `labels[k]`.
///
/// # Safety
/// `items` and `labels` must hold `n` entries.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_jac_seed(
    model: *mut TdpmixJac,
    items: *const usize,
    labels: *const usize,
    n: usize,
    replication: usize,
) -> TdpmixStatus {
    guard(|| {
        let m = borrow_mut(model, "model")?;
        let pairs: Vec<(usize, usize)> = slice(items, n, "items")?
            .iter()
            .copied()
            .zip(slice(labels, n, "labels")?.iter().copied())
            .collect();
        m.state.seed_clusters(&pairs, replication)?;
        Ok(())
    })
}

/// Runs `iterations` sweeps. `workers` = 0 runs the sequential sampler;
/// any other value uses the snapshot map/reduce schedule on that many
/// threads. `config` may be null for defaults. On failure the model keeps
/// its last completed iteration.
///
/// # Safety
/// `model` must be a live handle; `config` null or readable.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_jac_run(
    model: *mut TdpmixJac,
    iterations: usize,
    workers: usize,
    config: *const TdpmixJacConfig,
) -> TdpmixStatus {
    guard(|| {
        let m = borrow_mut(model, "model")?;
        let c = match config.as_ref() {
            Some(c) => jac_config(c)?,
            None => JacConfig::default(),
        };
        if workers == 0 {
            m.state.run(iterations, &c)?;
        } else {
            m.state.run_parallel(iterations, workers, &c)?;
        }
        Ok(())
    })
}

/// Item count, cluster count, concentration and joint log score.
///
/// # Safety
/// `model` must be a live handle; any output may be null to skip it.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_jac_summary(
    model: *const TdpmixJac,
    n_items: *mut usize,
    clusters: *mut usize,
    gamma: *mut f64,
    score: *mut f64,
) -> TdpmixStatus {
    guard(|| {
        let s = &borrow(model, "model")?.state;
        if !n_items.is_null() {
            n_items.write(s.len());
        }
        if !clusters.is_null() {
            clusters.write(s.num_clusters());
        }
        if !gamma.is_null() {
            gamma.write(s.gamma());
        }
        if !score.is_null() {
            score.write(s.joint_log_score());
        }
        Ok(())
    })
}

/// Dense cluster labels (0-based, in cluster creation order); `-1` marks
/// unassigned items.
///
/// # Safety
/// `out` must hold `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_jac_labels(model: *const TdpmixJac, out: *mut i64, capacity: usize) -> TdpmixStatus {
    guard(|| {
        let s = &borrow(model, "model")?.state;
        let labels = s.labels();
        let dst = out_slice(out, capacity, labels.len(), "out")?;
        for (d, l) in dst.iter_mut().zip(labels) {
            *d = l.map_or(-1, |v| v as i64);
        }
        Ok(())
    })
}

fn copy_rows(rows: &[Vec<f64>], out: *mut f64, capacity: usize) -> Result<(), Fail> {
    let needed: usize = rows.iter().map(Vec::len).sum();
    // SAFETY: the caller of the exported function vouches for `out`.
    let dst = unsafe { out_slice(out, capacity, needed, "out")? };
    for (d, v) in dst.iter_mut().zip(rows.iter().flatten()) {
        *d = *v;
    }
    Ok(())
}

/// Aligned items, row-major (`n_items * item_len` values).
///
/// # Safety
/// `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_jac_aligned(model: *const TdpmixJac, out: *mut f64, capacity: usize) -> TdpmixStatus {
    guard(|| copy_rows(borrow(model, "model")?.state.aligned(), out, capacity))
}

/// Transformation parameters, row-major (`n_items * family dim` values).
///
/// # Safety
/// `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_jac_params(model: *const TdpmixJac, out: *mut f64, capacity: usize) -> TdpmixStatus {
    guard(|| copy_rows(borrow(model, "model")?.state.rho(), out, capacity))
}

/// Writes the cluster statistics to `path` (no raw items).
///
/// # Safety
/// `model` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_jac_save_checkpoint(model: *const TdpmixJac, path: *const c_char) -> TdpmixStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let path = Path::new(text(path, "path")?);
        Checkpoint::from_state(&m.state, m.shape).save(path)?;
        Ok(())
    })
}

/// Starts a single-template alignment run at the identity.
///
/// # Safety
/// As [`tdpmix_jac_new`].
#[no_mangle]
pub unsafe extern "C" fn tdpmix_ba_new(
    dataset: *const TdpmixDataset,
    family: *const c_char,
    seed: u64,
    out: *mut *mut TdpmixBa,
) -> TdpmixStatus {
    guard(|| {
        let d = &borrow(dataset, "dataset")?.inner;
        let name = if family.is_null() { None } else { Some(text(family, "family")?) };
        let family = d.family(name)?;
        let priors = priors_for(d, &family)?;
        let state = BaState::new(d.items.clone(), family, priors, seed)?;
        write(out, Box::into_raw(Box::new(TdpmixBa { state })), "out")
    })
}

/// # Safety
/// `ba` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_ba_free(ba: *mut TdpmixBa) {
    if !ba.is_null() {
        drop(Box::from_raw(ba));
    }
}

/// Runs up to `sweeps` sweeps (stopping early on convergence) and reports
/// the final joint log score.
///
/// # Safety
/// `ba` must be a live handle; `score` null or writable.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_ba_run(ba: *mut TdpmixBa, sweeps: usize, score: *mut f64) -> TdpmixStatus {
    guard(|| {
        let b = borrow_mut(ba, "ba")?;
        let trace = b.state.run(&BaConfig { sweeps, ..BaConfig::default() })?;
        if !score.is_null() {
            score.write(*trace.last().expect("trace holds the initial score"));
        }
        Ok(())
    })
}

/// Aligned items, row-major.
///
/// # Safety
/// `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_ba_aligned(ba: *const TdpmixBa, out: *mut f64, capacity: usize) -> TdpmixStatus {
    guard(|| copy_rows(borrow(ba, "ba")?.state.aligned(), out, capacity))
}

/// Rand index between two labelings of `n` items.
///
/// # Safety
/// `pred` and `truth` must hold `n` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdpmix_rand_index(
    pred: *const i64,
    truth: *const i64,
    n: usize,
    out: *mut f64,
) -> TdpmixStatus {
    guard(|| {
        let ri = metrics::rand_index(slice(pred, n, "pred")?, slice(truth, n, "truth")?)?;
        write(out, ri, "out")
    })
}
