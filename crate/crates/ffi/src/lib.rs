//! C interface to `mlgraph`.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible function returns an [`MlgStatus`]; on failure the message
//! is available from [`mlg_last_error_message`] on the same thread.
//! Matrices cross the boundary as row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use mlgraph::cluster::{kmeans, nmi_slices, KMeansOptions, NmiNormalization};
use mlgraph::rmgl::{solve_rmgl, BetaEscalation, RmglConfig, RmglResult};
use mlgraph::{MlgError, MultiViewDataset};
use nalgebra::DMatrix;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Validation = 4,
    Divergence = 5,
    RankNotAchieved = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Views and optional labels, filled in by the caller.
pub struct MlgDataset {
    n_nodes: usize,
    views: Vec<DMatrix<f64>>,
    labels: Option<Vec<usize>>,
}

/// Solver settings.
pub struct MlgConfig {
    inner: RmglConfig,
}

/// Output of [`mlg_solve`].
pub struct MlgResult {
    inner: RmglResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &MlgError) -> MlgStatus {
    match err {
        MlgError::Dimension(_) | MlgError::RowMismatch { .. } => MlgStatus::DimensionMismatch,
        MlgError::Parameter(_) | MlgError::Index(_) | MlgError::InvalidSize(_) => MlgStatus::InvalidArgument,
        MlgError::Validation(_) | MlgError::Generation(_) => MlgStatus::Validation,
        MlgError::Divergence { .. } => MlgStatus::Divergence,
        MlgError::RankNotAchieved(_) => MlgStatus::RankNotAchieved,
        MlgError::Io { .. } | MlgError::Parse { .. } | MlgError::Format(_) => MlgStatus::Io,
    }
}

fn fail(status: MlgStatus, msg: &str) -> MlgStatus {
    set_error(msg);
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard<F>(f: F) -> MlgStatus
where
    F: FnOnce() -> Result<(), (MlgStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MlgStatus::Ok
        }
        Ok(Err((status, msg))) => fail(status, &msg),
        Err(_) => fail(MlgStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: MlgError) -> (MlgStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MlgStatus, String) {
    (MlgStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (MlgStatus, String) {
    (MlgStatus::InvalidArgument, msg.into())
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (MlgStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (MlgStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (MlgStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, needed: usize, what: &str) -> Result<&'a mut [T], (MlgStatus, String)> {
    if len < needed {
        return Err((
            MlgStatus::BufferTooSmall,
            format!("{what} holds {len} values, {needed} needed"),
        ));
    }
    if needed == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, needed))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mlg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call into the library.
#[no_mangle]
pub extern "C" fn mlg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates an empty dataset over `n_nodes` entities.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mlg_dataset_new(n_nodes: usize, out: *mut *mut MlgDataset) -> MlgStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        if n_nodes < 2 {
            return Err(invalid(format!("need at least 2 nodes, got {n_nodes}")));
        }
        *out = Box::into_raw(Box::new(MlgDataset {
            n_nodes,
            views: Vec::new(),
            labels: None,
        }));
        Ok(())
    })
}

/// Appends a view given as a row-major `n_nodes x cols` matrix.
///
/// # Safety
/// `ds` must come from [`mlg_dataset_new`]; `data` must point to
/// `n_nodes * cols` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn mlg_dataset_add_view(ds: *mut MlgDataset, data: *const f64, cols: usize) -> MlgStatus {
    guard(|| {
        let ds = as_mut(ds, "dataset")?;
        if cols == 0 {
            return Err(invalid("a view needs at least one column"));
        }
        let values = input(data, ds.n_nodes * cols, "data")?;
        ds.views.push(DMatrix::from_row_slice(ds.n_nodes, cols, values));
        Ok(())
    })
}

/// Attaches `n_nodes` ground-truth labels.
///
/// # Safety
/// `ds` must come from [`mlg_dataset_new`]; `labels` must point to `len`
/// readable values.
#[no_mangle]
pub unsafe extern "C" fn mlg_dataset_set_labels(ds: *mut MlgDataset, labels: *const usize, len: usize) -> MlgStatus {
    guard(|| {
        let ds = as_mut(ds, "dataset")?;
        if len != ds.n_nodes {
            return Err((
                MlgStatus::DimensionMismatch,
                format!("{len} labels for {} nodes", ds.n_nodes),
            ));
        }
        ds.labels = Some(input(labels, len, "labels")?.to_vec());
        Ok(())
    })
}

/// Number of views added so far, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or come from [`mlg_dataset_new`].
#[no_mangle]
pub unsafe extern "C" fn mlg_dataset_n_views(ds: *const MlgDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.views.len())
}

/// # Safety
/// `ds` must be null or come from [`mlg_dataset_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mlg_dataset_free(ds: *mut MlgDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Default settings for `k` clusters and `n_views` views.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mlg_config_new(k: usize, n_views: usize, out: *mut *mut MlgConfig) -> MlgStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        if k == 0 || n_views == 0 {
            return Err(invalid("k and n_views must be positive"));
        }
        *out = Box::into_raw(Box::new(MlgConfig {
            inner: RmglConfig::new(k, n_views),
        }));
        Ok(())
    })
}

unsafe fn set_per_view(cfg: *mut MlgConfig, view: isize, value: f64, beta: bool) -> MlgStatus {
    guard(|| {
        let cfg = &mut as_mut(cfg, "config")?.inner;
        let values = if beta { &mut cfg.betas } else { &mut cfg.alphas };
        match view {
            -1 => values.iter_mut().for_each(|v| *v = value),
            v if v >= 0 && (v as usize) < values.len() => values[v as usize] = value,
            v => return Err(invalid(format!("view index {v} out of range"))),
        }
        Ok(())
    })
}

/// Sets alpha of view `view` (0-based), or of every view when `view` is -1.
///
/// # Safety
/// `cfg` must come from [`mlg_config_new`].
#[no_mangle]
pub unsafe extern "C" fn mlg_config_set_alpha(cfg: *mut MlgConfig, view: isize, value: f64) -> MlgStatus {
    set_per_view(cfg, view, value, false)
}

/// Sets beta of view `view` (0-based), or of every view when `view` is -1.
///
/// # Safety
/// `cfg` must come from [`mlg_config_new`].
#[no_mangle]
pub unsafe extern "C" fn mlg_config_set_beta(cfg: *mut MlgConfig, view: isize, value: f64) -> MlgStatus {
    set_per_view(cfg, view, value, true)
}

/// Dual ascent step; a nonpositive value selects it automatically.
///
/// # Safety
/// `cfg` must come from [`mlg_config_new`].
#[no_mangle]
pub unsafe extern "C" fn mlg_config_set_rho(cfg: *mut MlgConfig, rho: f64) -> MlgStatus {
    guard(|| {
        as_mut(cfg, "config")?.inner.rho = (rho > 0.0).then_some(rho);
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`mlg_config_new`].
#[no_mangle]
pub unsafe extern "C" fn mlg_config_set_tolerances(cfg: *mut MlgConfig, inner_tol: f64, outer_tol: f64) -> MlgStatus {
    guard(|| {
        let cfg = &mut as_mut(cfg, "config")?.inner;
        cfg.inner_tol = inner_tol;
        cfg.outer_tol = outer_tol;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`mlg_config_new`].
#[no_mangle]
pub unsafe extern "C" fn mlg_config_set_max_iterations(cfg: *mut MlgConfig, max_outer: usize, max_inner: usize) -> MlgStatus {
    guard(|| {
        let cfg = &mut as_mut(cfg, "config")?.inner;
        cfg.max_outer = max_outer;
        cfg.max_inner = max_inner;
        Ok(())
    })
}

/// Enables beta escalation; `factor <= 0` disables it.
///
/// # Safety
/// `cfg` must come from [`mlg_config_new`].
#[no_mangle]
pub unsafe extern "C" fn mlg_config_set_beta_escalation(cfg: *mut MlgConfig, factor: f64, cap: f64) -> MlgStatus {
    guard(|| {
        as_mut(cfg, "config")?.inner.beta_escalation =
            (factor > 0.0).then_some(BetaEscalation { factor, cap });
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`mlg_config_new`].
#[no_mangle]
pub unsafe extern "C" fn mlg_config_set_normalize_covariance(cfg: *mut MlgConfig, on: bool) -> MlgStatus {
    guard(|| {
        as_mut(cfg, "config")?.inner.normalize_covariance = on;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from [`mlg_config_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mlg_config_free(cfg: *mut MlgConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Learns the multi-layer graph and embedding.
///
/// # Safety
/// `ds` and `cfg` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlg_solve(ds: *const MlgDataset, cfg: *const MlgConfig, out: *mut *mut MlgResult) -> MlgStatus {
    guard(|| {
        let ds = as_ref(ds, "dataset")?;
        let cfg = as_ref(cfg, "config")?;
        let out = as_mut(out, "out")?;
        let data = MultiViewDataset::new(ds.views.clone(), ds.labels.clone()).map_err(lib_err)?;
        let res = solve_rmgl(&data, &cfg.inner).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(MlgResult { inner: res }));
        Ok(())
    })
}

/// # Safety
/// `res` must be null or come from [`mlg_solve`].
#[no_mangle]
pub unsafe extern "C" fn mlg_result_n_nodes(res: *const MlgResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.graph.n_nodes())
}

/// # Safety
/// `res` must be null or come from [`mlg_solve`].
#[no_mangle]
pub unsafe extern "C" fn mlg_result_n_layers(res: *const MlgResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.graph.n_layers())
}

/// Embedding dimension `K`.
///
/// # Safety
/// `res` must be null or come from [`mlg_solve`].
#[no_mangle]
pub unsafe extern "C" fn mlg_result_k(res: *const MlgResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.embedding.dim())
}

/// # Safety
/// `res` must be null or come from [`mlg_solve`].
#[no_mangle]
pub unsafe extern "C" fn mlg_result_iterations(res: *const MlgResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.iterations)
}

/// # Safety
/// `res` must be null or come from [`mlg_solve`].
#[no_mangle]
pub unsafe extern "C" fn mlg_result_converged(res: *const MlgResult) -> bool {
    res.as_ref().is_some_and(|r| r.inner.converged)
}

/// Whether every layer has exactly `K` components.
///
/// # Safety
/// `res` must be null or come from [`mlg_solve`].
#[no_mangle]
pub unsafe extern "C" fn mlg_result_rank_achieved(res: *const MlgResult) -> bool {
    res.as_ref().is_some_and(|r| r.inner.rank_achieved)
}

/// Copies the row-major `N x K` embedding into `buf`.
///
/// # Safety
/// `res` must come from [`mlg_solve`]; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mlg_result_copy_embedding(res: *const MlgResult, buf: *mut f64, len: usize) -> MlgStatus {
    guard(|| {
        let q = as_ref(res, "result")?.inner.embedding.q();
        let dst = output(buf, len, q.len(), "buf")?;
        for (i, row) in q.row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                dst[i * q.ncols() + j] = *v;
            }
        }
        Ok(())
    })
}

/// Copies Laplacian `layer` (0-based) as a row-major `N x N` matrix.
///
/// # Safety
/// `res` must come from [`mlg_solve`]; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mlg_result_copy_laplacian(res: *const MlgResult, layer: usize, buf: *mut f64, len: usize) -> MlgStatus {
    guard(|| {
        let layers = as_ref(res, "result")?.inner.graph.layers();
        let l = layers
            .get(layer)
            .ok_or_else(|| invalid(format!("layer {layer} out of range ({} layers)", layers.len())))?
            .matrix();
        let dst = output(buf, len, l.len(), "buf")?;
        // Symmetric, so column-major storage is also row-major.
        dst.copy_from_slice(l.as_slice());
        Ok(())
    })
}

/// Connected components of layer `layer` (0-based).
///
/// # Safety
/// `res` must come from [`mlg_solve`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlg_result_component_count(res: *const MlgResult, layer: usize, out: *mut usize) -> MlgStatus {
    guard(|| {
        let ranks = &as_ref(res, "result")?.inner.per_layer_ranks;
        let out = as_mut(out, "out")?;
        *out = *ranks
            .get(layer)
            .ok_or_else(|| invalid(format!("layer {layer} out of range ({} layers)", ranks.len())))?;
        Ok(())
    })
}

/// Number of recorded objective values.
///
/// # Safety
/// `res` must be null or come from [`mlg_solve`].
#[no_mangle]
pub unsafe extern "C" fn mlg_result_objective_len(res: *const MlgResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.objective_trace.len())
}

/// # Safety
/// `res` must come from [`mlg_solve`]; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mlg_result_copy_objective(res: *const MlgResult, buf: *mut f64, len: usize) -> MlgStatus {
    guard(|| {
        let trace = &as_ref(res, "result")?.inner.objective_trace;
        output(buf, len, trace.len(), "buf")?.copy_from_slice(trace);
        Ok(())
    })
}

/// # Safety
/// `res` must be null or come from [`mlg_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mlg_result_free(res: *mut MlgResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// k-means with plus-plus seeding on the rows of a row-major `n x dim`
/// matrix. Writes `n` labels in `0..k`.
///
/// # Safety
/// `points` must hold `n * dim` doubles and `labels` room for `n` values.
#[no_mangle]
pub unsafe extern "C" fn mlg_kmeans(
    points: *const f64,
    n: usize,
    dim: usize,
    k: usize,
    restarts: usize,
    seed: u64,
    labels: *mut usize,
) -> MlgStatus {
    guard(|| {
        if n == 0 || dim == 0 {
            return Err(invalid("need at least one point and one dimension"));
        }
        let m = DMatrix::from_row_slice(n, dim, input(points, n * dim, "points")?);
        let opts = KMeansOptions {
            restarts,
            ..KMeansOptions::with_seed(seed)
        };
        let res = kmeans(&m, k, &opts).map_err(lib_err)?;
        output(labels, n, n, "labels")?.copy_from_slice(res.labeling.labels());
        Ok(())
    })
}

/// Normalized mutual information between two labelings of length `n`,
/// normalized by the arithmetic mean of the entropies.
///
/// # Safety
/// `a` and `b` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlg_nmi(a: *const usize, b: *const usize, n: usize, out: *mut f64) -> MlgStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let a = input(a, n, "a")?;
        let b = input(b, n, "b")?;
        *out = nmi_slices(a, b, NmiNormalization::Arithmetic).map_err(lib_err)?;
        Ok(())
    })
}

/// Reads the last error as an owned Rust string (for tests and Rust callers).
pub fn last_error() -> String {
    // SAFETY: the pointer comes from a live thread-local CString.
    unsafe { CStr::from_ptr(mlg_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

