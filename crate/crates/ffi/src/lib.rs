//! C ABI over `netinfer`: opaque handles, status codes and a per-thread last-error message.
//!
//! Every function returns an [`NiStatus`]; outputs go through pointer arguments.
//! Handles are released with the matching `*_free` function. Strings returned
//! to the caller are released with [`ni_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use netinfer::eval::metrics::{auc, upper_mask};
use netinfer::experiment::{run, simulate, ExperimentConfig};
use netinfer::graph::{generate_ws, AdjacencyMatrix, AdjacencyMode, Graph};
use netinfer::sim::{build_dataset, load_dataset, save_dataset, CmlParams, Dataset, DatasetSpec, Dynamics};
use netinfer::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    MissingInput = 4,
    Io = 5,
    UndefinedMetric = 6,
    Runtime = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiModel {
    Voter = 0,
    /// Coupled map lattice with default parameters.
    Cml = 1,
}

/// Opaque undirected graph.
pub struct NiGraph(Graph);

/// Opaque simulated dataset.
pub struct NiDataset(Dataset);

/// Opaque experiment configuration.
pub struct NiExperiment(ExperimentConfig);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NiStatus {
    match e {
        Error::InvalidParameter(_) | Error::Shape { .. } => NiStatus::InvalidArgument,
        Error::Config { .. } | Error::Parse { .. } => NiStatus::Config,
        Error::MissingInput(_) => NiStatus::MissingInput,
        Error::Io { .. } => NiStatus::Io,
        Error::UndefinedMetric(_) => NiStatus::UndefinedMetric,
        Error::Training(_) => NiStatus::Runtime,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (NiStatus, String)>) -> NiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NiStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NiStatus::Panic
        }
    }
}

fn fail(e: Error) -> (NiStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (NiStatus, String) {
    (NiStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (NiStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (NiStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn ni_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ni_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ni_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Watts-Strogatz graph with `n` nodes, even mean degree `k` and rewiring probability `p`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ni_graph_generate_ws(n: usize, k: usize, p: f64, seed: u64, out: *mut *mut NiGraph) -> NiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = generate_ws(n, k, p, seed).map_err(fail)?;
        put(out, NiGraph(g));
        Ok(())
    })
}

/// # Safety
/// `g` must be a live graph handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ni_graph_node_count(g: *const NiGraph, out: *mut usize) -> NiStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("g"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = g.0.n();
        Ok(())
    })
}

/// # Safety
/// `g` must be a live graph handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ni_graph_edge_count(g: *const NiGraph, out: *mut usize) -> NiStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("g"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = g.0.edge_count();
        Ok(())
    })
}

/// Writes the row-major `n * n` 0/1 adjacency into `buf` of length `len`.
///
/// # Safety
/// `g` must be a live graph handle; `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ni_graph_adjacency(g: *const NiGraph, buf: *mut f64, len: usize) -> NiStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("g"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let a = g.0.to_adjacency();
        if len != a.values().len() {
            return Err((
                NiStatus::InvalidArgument,
                format!("buffer holds {len} values, adjacency has {}", a.values().len()),
            ));
        }
        ptr::copy_nonoverlapping(a.values().as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `g` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ni_graph_free(g: *mut NiGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Simulates `model` on `g`. Voter datasets use one transition per sample.
///
/// # Safety
/// `g` must be a live graph handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ni_dataset_simulate(
    g: *const NiGraph,
    model: NiModel,
    simulations: usize,
    steps: usize,
    record_length: usize,
    seed: u64,
    out: *mut *mut NiDataset,
) -> NiStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("g"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let dynamics = match model {
            NiModel::Voter => Dynamics::Voter,
            NiModel::Cml => Dynamics::Cml(CmlParams::default()),
        };
        let spec = DatasetSpec {
            dynamics,
            simulations,
            steps,
            record_length,
        };
        let ds = build_dataset(&g.0, &spec, seed).map_err(fail)?;
        put(out, NiDataset(ds));
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live dataset handle; outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ni_dataset_shape(
    ds: *const NiDataset,
    samples: *mut usize,
    states_per_record: *mut usize,
    nodes: *mut usize,
    dim: *mut usize,
) -> NiStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.0;
        if samples.is_null() || states_per_record.is_null() || nodes.is_null() || dim.is_null() {
            return Err(null("output"));
        }
        *samples = ds.sample_count();
        *states_per_record = ds.states_per_record();
        *nodes = ds.n();
        *dim = ds.d();
        Ok(())
    })
}

/// Copies all states (`[sample][time][node][dim]`, `f32`) into `buf` of length `len`.
///
/// # Safety
/// `ds` must be a live dataset handle; `buf` valid for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn ni_dataset_states(ds: *const NiDataset, buf: *mut f32, len: usize) -> NiStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.0;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let s = ds.states();
        if len != s.len() {
            return Err((NiStatus::InvalidArgument, format!("buffer holds {len} values, dataset has {}", s.len())));
        }
        ptr::copy_nonoverlapping(s.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live dataset handle; `dir` a nul-terminated path.
#[no_mangle]
pub unsafe extern "C" fn ni_dataset_save(ds: *const NiDataset, dir: *const c_char) -> NiStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.0;
        let dir = str_arg(dir, "dir")?;
        save_dataset(ds, Path::new(dir)).map_err(fail)
    })
}

/// # Safety
/// `dir` must be a nul-terminated path; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ni_dataset_load(dir: *const c_char, out: *mut *mut NiDataset) -> NiStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let path = Path::new(dir);
        if !path.join("meta.json").exists() {
            return Err(fail(Error::MissingInput(path.to_path_buf())));
        }
        let ds = load_dataset(path).map_err(fail)?;
        put(out, NiDataset(ds));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ni_dataset_free(ds: *mut NiDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Parses an experiment config from JSON text.
///
/// # Safety
/// `json` must be nul-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ni_experiment_from_json(json: *const c_char, out: *mut *mut NiExperiment) -> NiStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = ExperimentConfig::from_json(text, &[]).map_err(fail)?;
        put(out, NiExperiment(cfg));
        Ok(())
    })
}

/// Applies a `key=value` override (same syntax as the CLI `--set`).
///
/// # Safety
/// `exp` must be a live experiment handle; `assignment` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn ni_experiment_set(exp: *mut NiExperiment, assignment: *const c_char) -> NiStatus {
    guard(|| {
        let exp = exp.as_mut().ok_or_else(|| null("exp"))?;
        let kv = str_arg(assignment, "assignment")?;
        let json = serde_json::to_string(&exp.0).expect("config serializes");
        exp.0 = ExperimentConfig::from_json(&json, &[kv.to_string()]).map_err(fail)?;
        Ok(())
    })
}

/// Simulates, trains and evaluates; `*metrics_json` receives the metrics report
/// as JSON (free with `ni_string_free`).
///
/// # Safety
/// `exp` must be a live experiment handle; `metrics_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ni_experiment_run(exp: *const NiExperiment, metrics_json: *mut *mut c_char) -> NiStatus {
    guard(|| {
        let cfg = &exp.as_ref().ok_or_else(|| null("exp"))?.0;
        if metrics_json.is_null() {
            return Err(null("metrics_json"));
        }
        let ds = simulate(cfg).map_err(fail)?;
        let outcome = run(cfg, &ds).map_err(fail)?;
        let text = serde_json::to_string(&outcome.report).expect("report serializes");
        *metrics_json = CString::new(text).expect("json has no nul").into_raw();
        Ok(())
    })
}

/// # Safety
/// `exp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ni_experiment_free(exp: *mut NiExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// AUC of row-major `n * n` edge scores against a 0/1 truth over the upper triangle.
///
/// # Safety
/// `scores` and `truth` must each hold `n * n` doubles; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ni_auc(scores: *const f64, truth: *const f64, n: usize, out: *mut f64) -> NiStatus {
    guard(|| {
        if scores.is_null() || truth.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let len = n.checked_mul(n).ok_or((NiStatus::InvalidArgument, "n too large".to_string()))?;
        let s = std::slice::from_raw_parts(scores, len).to_vec();
        let t = std::slice::from_raw_parts(truth, len).to_vec();
        let s = AdjacencyMatrix::new(n, s, AdjacencyMode::Soft).map_err(fail)?;
        let t = AdjacencyMatrix::new(n, t, AdjacencyMode::Binary).map_err(fail)?;
        *out = auc(&s, &t, &upper_mask(n)).map_err(fail)?;
        Ok(())
    })
}
