//! C ABI over the `evhin` engine.
//!
//! Every function returns an [`EvhinStatus`]. On failure the message is kept
//! per thread and read with [`evhin_last_error`]. Objects cross the boundary
//! as opaque handles that the caller frees with the matching `*_free`.
//! Panics are caught and reported as [`EvhinStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use evhin::hdbscan::{h_dbscan, DbscanParams, DistanceMatrix};
use evhin::ingest::{build_hin, read_corpus_file, EnrichmentTables};
use evhin::metapath::{
    MetaPathSet, PathFilter, SimilarityStack, WeightVector, DEFAULT_MAX_LEN_EVENT, DEFAULT_MAX_LEN_INSTANCE,
};
use evhin::{Error, Hin, NodeType};
use ndarray::{Array2, ArrayView1};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvhinStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numeric = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Heterogeneous graph handle.
pub struct EvhinHin(Hin);

/// Ordered meta-path set handle.
pub struct EvhinPathSet(MetaPathSet);

/// Sparse distance matrix handle.
pub struct EvhinDistance(DistanceMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(EvhinStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => EvhinStatus::Io,
            Error::Parse { .. } | Error::Json(_) => EvhinStatus::Parse,
            Error::Numeric { .. } => EvhinStatus::Numeric,
            _ => EvhinStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(EvhinStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(EvhinStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EvhinStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EvhinStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
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
            EvhinStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{what}` is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn evhin_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a graph from a JSON-lines corpus. `enrich_dir` may be null.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evhin_hin_from_corpus(
    corpus_path: *const c_char,
    enrich_dir: *const c_char,
    slot_secs: i64,
    out: *mut *mut EvhinHin,
) -> EvhinStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if slot_secs <= 0 {
            return Err(invalid("slot_secs must be positive"));
        }
        let corpus = read_corpus_file(&path_arg(corpus_path, "corpus_path")?)?;
        let tables = if enrich_dir.is_null() {
            EnrichmentTables::default()
        } else {
            EnrichmentTables::load_dir(&path_arg(enrich_dir, "enrich_dir")?)?
        };
        put(out, EvhinHin(build_hin(&corpus.records, &tables, slot_secs)?));
        Ok(())
    })
}

/// Loads a graph snapshot written by `evhin build-hin`.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evhin_hin_load(path: *const c_char, out: *mut *mut EvhinHin) -> EvhinStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let text = std::fs::read_to_string(&path).map_err(|e| Failure(EvhinStatus::Io, format!("{}: {e}", path.display())))?;
        let snap = serde_json::from_str(&text).map_err(Error::from)?;
        put(out, EvhinHin(Hin::from_snapshot(snap)?));
        Ok(())
    })
}

/// Number of instance nodes.
///
/// # Safety
/// `hin` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evhin_hin_instance_count(hin: *const EvhinHin, out: *mut usize) -> EvhinStatus {
    guard(|| {
        let hin = hin.as_ref().ok_or_else(|| null("hin"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = hin.0.node_count(NodeType::EventInstance);
        Ok(())
    })
}

/// # Safety
/// `hin` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn evhin_hin_free(hin: *mut EvhinHin) {
    if !hin.is_null() {
        drop(Box::from_raw(hin));
    }
}

/// Default instance-anchored path set; `max_len` 0 selects the default.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evhin_pathset_detection(max_len: usize, out: *mut *mut EvhinPathSet) -> EvhinStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = if max_len == 0 { DEFAULT_MAX_LEN_INSTANCE } else { max_len };
        put(out, EvhinPathSet(MetaPathSet::detection(len, PathFilter::default())?));
        Ok(())
    })
}

/// Default event-anchored path set; `max_len` 0 selects the default.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evhin_pathset_evolution(max_len: usize, out: *mut *mut EvhinPathSet) -> EvhinStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = if max_len == 0 { DEFAULT_MAX_LEN_EVENT } else { max_len };
        put(out, EvhinPathSet(MetaPathSet::evolution(len, PathFilter::default())?));
        Ok(())
    })
}

/// # Safety
/// `paths` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evhin_pathset_len(paths: *const EvhinPathSet, out: *mut usize) -> EvhinStatus {
    guard(|| {
        let paths = paths.as_ref().ok_or_else(|| null("paths"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = paths.0.len();
        Ok(())
    })
}

/// # Safety
/// `paths` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn evhin_pathset_free(paths: *mut EvhinPathSet) {
    if !paths.is_null() {
        drop(Box::from_raw(paths));
    }
}

unsafe fn weights_arg(paths: &MetaPathSet, weights: *const f64, n_weights: usize) -> Result<WeightVector, Failure> {
    if weights.is_null() && n_weights == 0 {
        return Ok(WeightVector::uniform(paths.len()));
    }
    Ok(WeightVector::new(slice_arg(weights, n_weights, "weights")?.to_vec())?)
}

/// Dense row-major KIES matrix over all anchors of the path set. Null
/// `weights` with `n_weights` 0 means uniform weights. `out` must hold
/// `n * n` values where `n` is the anchor count.
///
/// # Safety
/// Handles must come from this library; buffers must hold the stated
/// lengths.
#[no_mangle]
pub unsafe extern "C" fn evhin_kies_matrix(
    hin: *const EvhinHin,
    paths: *const EvhinPathSet,
    weights: *const f64,
    n_weights: usize,
    out: *mut f64,
    out_len: usize,
) -> EvhinStatus {
    guard(|| {
        let hin = &hin.as_ref().ok_or_else(|| null("hin"))?.0;
        let paths = &paths.as_ref().ok_or_else(|| null("paths"))?.0;
        let w = weights_arg(paths, weights, n_weights)?;
        let n = hin.node_count(paths.anchor());
        if out_len < n * n {
            return Err(Failure(EvhinStatus::BufferTooSmall, format!("need {} values, got {out_len}", n * n)));
        }
        let k = SimilarityStack::compute(hin, paths)?.combine(&w)?;
        let buf = out_slice(out, n * n, "out")?;
        buf.fill(0.0);
        for (i, j, v) in k.iter() {
            buf[i * n + j] = v;
        }
        Ok(())
    })
}

/// Distances `1 - KIES` over all anchors, kept sparse.
///
/// # Safety
/// As for [`evhin_kies_matrix`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evhin_distance_from_kies(
    hin: *const EvhinHin,
    paths: *const EvhinPathSet,
    weights: *const f64,
    n_weights: usize,
    out: *mut *mut EvhinDistance,
) -> EvhinStatus {
    guard(|| {
        let hin = &hin.as_ref().ok_or_else(|| null("hin"))?.0;
        let paths = &paths.as_ref().ok_or_else(|| null("paths"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let w = weights_arg(paths, weights, n_weights)?;
        let k = SimilarityStack::compute(hin, paths)?.combine(&w)?;
        put(out, EvhinDistance(DistanceMatrix::from_kies_sparse(&k)?));
        Ok(())
    })
}

/// Distance matrix from `n * n` row-major values in `[0, 1]`.
///
/// # Safety
/// `data` must hold `n * n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evhin_distance_from_dense(
    data: *const f64,
    n: usize,
    out: *mut *mut EvhinDistance,
) -> EvhinStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let values = slice_arg(data, n * n, "data")?;
        let d = Array2::from_shape_vec((n, n), values.to_vec()).map_err(|e| invalid(e.to_string()))?;
        put(out, EvhinDistance(DistanceMatrix::from_dense(&d)?));
        Ok(())
    })
}

/// # Safety
/// `dist` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evhin_distance_len(dist: *const EvhinDistance, out: *mut usize) -> EvhinStatus {
    guard(|| {
        let dist = dist.as_ref().ok_or_else(|| null("dist"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = dist.0.len();
        Ok(())
    })
}

/// # Safety
/// `dist` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn evhin_distance_free(dist: *mut EvhinDistance) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// Density clustering; writes one label per point (`-1` is noise).
///
/// # Safety
/// `dist` must come from this library; `labels` must hold `n_labels`
/// values.
#[no_mangle]
pub unsafe extern "C" fn evhin_cluster(
    dist: *const EvhinDistance,
    eps: f64,
    min_pts: usize,
    threads: usize,
    labels: *mut i64,
    n_labels: usize,
) -> EvhinStatus {
    guard(|| {
        let dist = &dist.as_ref().ok_or_else(|| null("dist"))?.0;
        if n_labels < dist.len() {
            return Err(Failure(
                EvhinStatus::BufferTooSmall,
                format!("need {} labels, got {n_labels}", dist.len()),
            ));
        }
        let out = h_dbscan(dist, &DbscanParams { eps, min_pts, threads })?;
        out_slice(labels, dist.len(), "labels")?.copy_from_slice(out.as_slice());
        Ok(())
    })
}

/// Normalized mutual information between two labelings of `n` items.
///
/// # Safety
/// `pred` and `truth` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evhin_nmi(pred: *const i64, truth: *const i64, n: usize, out: *mut f64) -> EvhinStatus {
    guard(|| {
        let p = slice_arg(pred, n, "pred")?;
        let t = slice_arg(truth, n, "truth")?;
        *out.as_mut().ok_or_else(|| null("out"))? = evhin::eval::nmi(p, t)?;
        Ok(())
    })
}

/// Popularity score `-log10(r - 1 + c)` for the norm ratio `r >= 1` of two
/// representations; positive means same class. Zero vectors are rejected.
///
/// # Safety
/// `vi` and `vj` must hold `dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evhin_popularity_score(
    vi: *const f64,
    vj: *const f64,
    dim: usize,
    c: f64,
    out: *mut f64,
) -> EvhinStatus {
    guard(|| {
        let a = ArrayView1::from(slice_arg(vi, dim, "vi")?);
        let b = ArrayView1::from(slice_arg(vj, dim, "vj")?);
        if !(c > 0.0 && c < 1.0) {
            return Err(invalid(format!("c must lie in (0, 1), got {c}")));
        }
        let score = evhin::ppgcn::popularity_score(a, b, c).map_err(|_| invalid("zero-length representation"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = score.score;
        Ok(())
    })
}
