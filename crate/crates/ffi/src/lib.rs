//! C ABI over `recourse-core`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`/`*_fit`/`*_explain_*` function and released by the matching
//! `*_free`. Functions return a [`RecourseStatus`]; on failure a message is
//! available from [`recourse_last_error`] on the same thread.
//!
//! Points passed in and out are in standardized feature units unless a
//! function name says `raw`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use recourse_core::io::synth::generate_two_moons;
use recourse_core::io::trace::TraceDocument;
use recourse_core::model::{fit_reference_model, score, FitOptions, ModelKind, ReferenceModel, ScoringModel};
use recourse_core::types::{Dataset, DensityThreshold, WeightMode};
use recourse_core::{privacy_report, Explainer, ExplainerConfig, Instance, RecourseError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecourseStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// The search ran but found no recourse.
    NoRecourse = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Reference model family for [`recourse_model_fit`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecourseModelKind {
    Knn = 0,
    Rbf = 1,
}

/// Edge admission rule.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecourseWeightMode {
    Average = 0,
    Strict = 1,
}

/// Explanation parameters; fill with [`recourse_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecourseConfig {
    pub k_neighbors: usize,
    pub momentum_window: usize,
    pub epsilon: f64,
    pub decision_threshold: f64,
    /// Density threshold as a quantile of training densities.
    pub density_quantile: f64,
    pub line_samples: usize,
    pub weight_mode: RecourseWeightMode,
    pub max_explore_iters: usize,
    pub max_exploit_iters: usize,
    pub seed: u64,
}

/// Fractions of the training set touched by each stage.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RecoursePrivacy {
    pub explore: f64,
    pub exploit: f64,
    pub enhance: f64,
    pub total: f64,
}

/// Opaque training set.
pub struct RecourseDataset(Dataset);

/// Opaque fitted classifier.
pub struct RecourseModel(Arc<ReferenceModel>);

/// Opaque explainer bound to one dataset and model.
pub struct RecourseExplainer(Explainer);

/// Opaque successful explanation.
pub struct RecourseOutcome {
    steps: Vec<Vec<f64>>,
    counterfactual: Vec<f64>,
    final_score: f64,
    privacy: RecoursePrivacy,
    trace_json: String,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut s = msg.into();
    s.retain(|c| c != '\0');
    let c = CString::new(s).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: RecourseStatus, msg: impl Into<String>) -> RecourseStatus {
    set_error(msg);
    status
}

fn from_core(e: RecourseError) -> RecourseStatus {
    let status = match e {
        RecourseError::DimensionMismatch { .. } => RecourseStatus::DimensionMismatch,
        _ => RecourseStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> RecourseStatus) -> RecourseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RecourseStatus::Panic, "internal panic"),
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Option<&'a [T]> {
    if p.is_null() {
        return None;
    }
    // SAFETY: caller promises `p` points at `len` initialized values.
    Some(unsafe { std::slice::from_raw_parts(p, len) })
}

fn into_out<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers checked `out` for null.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

fn copy_out(src: &[f64], out: *mut f64, len: usize) -> RecourseStatus {
    if out.is_null() {
        return fail(RecourseStatus::NullPointer, "output buffer is null");
    }
    if len < src.len() {
        return fail(
            RecourseStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        );
    }
    // SAFETY: `out` has room for at least `src.len()` values.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), out, src.len()) };
    RecourseStatus::Ok
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn recourse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn recourse_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: `s` was produced by `CString::into_raw`.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Build a dataset from `n × dim` row-major raw values and `n` labels in {0, 1}.
/// Features are standardized internally.
///
/// # Safety
/// `rows` must hold `n * dim` doubles, `labels` `n` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn recourse_dataset_new(
    rows: *const f64,
    n: usize,
    dim: usize,
    labels: *const u8,
    out: *mut *mut RecourseDataset,
) -> RecourseStatus {
    guard(|| {
        if out.is_null() {
            return fail(RecourseStatus::NullPointer, "out is null");
        }
        let Some(total) = n.checked_mul(dim) else {
            return fail(RecourseStatus::InvalidArgument, "n * dim overflows");
        };
        // SAFETY: forwarded caller contract.
        let (Some(flat), Some(labels)) = (unsafe { slice(rows, total) }, unsafe { slice(labels, n) }) else {
            return fail(RecourseStatus::NullPointer, "rows or labels is null");
        };
        if dim == 0 {
            return fail(RecourseStatus::InvalidArgument, "dim must be positive");
        }
        let raw: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
        let names: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
        match Dataset::from_raw(&raw, labels.to_vec(), &names) {
            Ok(d) => {
                into_out(out, RecourseDataset(d));
                RecourseStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Seeded two-moons dataset with `n` points.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn recourse_dataset_two_moons(
    n: usize,
    noise: f64,
    seed: u64,
    out: *mut *mut RecourseDataset,
) -> RecourseStatus {
    guard(|| {
        if out.is_null() {
            return fail(RecourseStatus::NullPointer, "out is null");
        }
        let built = generate_two_moons(n, noise, seed)
            .and_then(|(raw, labels)| Dataset::from_raw(&raw, labels, &["x0".into(), "x1".into()]));
        match built {
            Ok(d) => {
                into_out(out, RecourseDataset(d));
                RecourseStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `d` must be null or a live dataset.
#[no_mangle]
pub unsafe extern "C" fn recourse_dataset_len(d: *const RecourseDataset) -> usize {
    // SAFETY: caller contract.
    unsafe { d.as_ref() }.map_or(0, |d| d.0.n())
}

/// # Safety
/// `d` must be null or a live dataset.
#[no_mangle]
pub unsafe extern "C" fn recourse_dataset_dim(d: *const RecourseDataset) -> usize {
    // SAFETY: caller contract.
    unsafe { d.as_ref() }.map_or(0, |d| d.0.dim())
}

/// Copy the standardized row `row` into `out` (room for `len` doubles).
///
/// # Safety
/// `d` must be a live dataset; `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn recourse_dataset_row(
    d: *const RecourseDataset,
    row: usize,
    out: *mut f64,
    len: usize,
) -> RecourseStatus {
    guard(|| {
        // SAFETY: caller contract.
        let Some(d) = (unsafe { d.as_ref() }) else {
            return fail(RecourseStatus::NullPointer, "dataset is null");
        };
        if row >= d.0.n() {
            return fail(RecourseStatus::InvalidArgument, format!("row {row} out of range"));
        }
        copy_out(d.0.points.row(row), out, len)
    })
}

/// # Safety
/// `d` must be null or a dataset not yet freed.
#[no_mangle]
pub unsafe extern "C" fn recourse_dataset_free(d: *mut RecourseDataset) {
    if !d.is_null() {
        // SAFETY: produced by `Box::into_raw`.
        drop(unsafe { Box::from_raw(d) });
    }
}

/// Fit a reference classifier on `d`.
///
/// # Safety
/// `d` must be a live dataset; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn recourse_model_fit(
    d: *const RecourseDataset,
    kind: RecourseModelKind,
    seed: u64,
    out: *mut *mut RecourseModel,
) -> RecourseStatus {
    guard(|| {
        // SAFETY: caller contract.
        let Some(d) = (unsafe { d.as_ref() }) else {
            return fail(RecourseStatus::NullPointer, "dataset is null");
        };
        if out.is_null() {
            return fail(RecourseStatus::NullPointer, "out is null");
        }
        let kind = match kind {
            RecourseModelKind::Knn => ModelKind::KnnProbability,
            RecourseModelKind::Rbf => ModelKind::RbfLogistic,
        };
        let options = FitOptions {
            seed,
            ..FitOptions::default()
        };
        match fit_reference_model(&d.0, kind, &options) {
            Ok(m) => {
                into_out(out, RecourseModel(Arc::new(m)));
                RecourseStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Score a standardized point.
///
/// # Safety
/// `m` must be a live model; `x` must hold `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn recourse_model_score(
    m: *const RecourseModel,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> RecourseStatus {
    guard(|| {
        // SAFETY: caller contract.
        let (Some(m), Some(x)) = (unsafe { m.as_ref() }, unsafe { slice(x, dim) }) else {
            return fail(RecourseStatus::NullPointer, "model or point is null");
        };
        if out.is_null() {
            return fail(RecourseStatus::NullPointer, "out is null");
        }
        match score(m.0.as_ref(), x) {
            Ok(s) => {
                // SAFETY: checked non-null.
                unsafe { *out = s };
                RecourseStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `m` must be null or a model not yet freed.
#[no_mangle]
pub unsafe extern "C" fn recourse_model_free(m: *mut RecourseModel) {
    if !m.is_null() {
        // SAFETY: produced by `Box::into_raw`.
        drop(unsafe { Box::from_raw(m) });
    }
}

/// Fill `out` with the library defaults.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn recourse_config_default(out: *mut RecourseConfig) -> RecourseStatus {
    if out.is_null() {
        return fail(RecourseStatus::NullPointer, "out is null");
    }
    let d = ExplainerConfig::default();
    let q = match d.density_threshold {
        DensityThreshold::Quantile(q) => q,
        DensityThreshold::Absolute(_) => 0.2,
    };
    // SAFETY: checked non-null.
    unsafe {
        *out = RecourseConfig {
            k_neighbors: d.k_neighbors,
            momentum_window: d.momentum_window,
            epsilon: d.epsilon,
            decision_threshold: d.decision_threshold,
            density_quantile: q,
            line_samples: d.line_samples,
            weight_mode: RecourseWeightMode::Average,
            max_explore_iters: d.max_explore_iters,
            max_exploit_iters: d.max_exploit_iters,
            seed: d.seed,
        }
    };
    RecourseStatus::Ok
}

fn to_core_config(c: &RecourseConfig) -> ExplainerConfig {
    ExplainerConfig {
        k_neighbors: c.k_neighbors,
        momentum_window: c.momentum_window,
        epsilon: c.epsilon,
        decision_threshold: c.decision_threshold,
        density_threshold: DensityThreshold::Quantile(c.density_quantile),
        line_samples: c.line_samples,
        weight_mode: match c.weight_mode {
            RecourseWeightMode::Average => WeightMode::Average,
            RecourseWeightMode::Strict => WeightMode::Strict,
        },
        max_explore_iters: c.max_explore_iters,
        max_exploit_iters: c.max_exploit_iters,
        seed: c.seed,
        ..ExplainerConfig::default()
    }
}

/// Bind a copy of `d` and a shared reference to `m`.
///
/// # Safety
/// `d` and `m` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn recourse_explainer_new(
    d: *const RecourseDataset,
    m: *const RecourseModel,
    out: *mut *mut RecourseExplainer,
) -> RecourseStatus {
    guard(|| {
        // SAFETY: caller contract.
        let (Some(d), Some(m)) = (unsafe { d.as_ref() }, unsafe { m.as_ref() }) else {
            return fail(RecourseStatus::NullPointer, "dataset or model is null");
        };
        if out.is_null() {
            return fail(RecourseStatus::NullPointer, "out is null");
        }
        let model: Arc<dyn ScoringModel> = m.0.clone();
        match Explainer::new(d.0.clone(), model, ExplainerConfig::default().kde_bandwidth) {
            Ok(e) => {
                into_out(out, RecourseExplainer(e));
                RecourseStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `e` must be null or an explainer not yet freed.
#[no_mangle]
pub unsafe extern "C" fn recourse_explainer_free(e: *mut RecourseExplainer) {
    if !e.is_null() {
        // SAFETY: produced by `Box::into_raw`.
        drop(unsafe { Box::from_raw(e) });
    }
}

fn run_explain(
    explainer: &Explainer,
    factual: Instance,
    config: &RecourseConfig,
    out: *mut *mut RecourseOutcome,
) -> RecourseStatus {
    let cfg = to_core_config(config);
    if let Err(e) = cfg.validate() {
        return from_core(e);
    }
    match explainer.explain(&factual, None, &cfg) {
        Ok(r) => {
            let trace_json = match TraceDocument::from_result(explainer, &cfg, &r).and_then(|d| d.to_json()) {
                Ok(s) => s,
                Err(e) => return from_core(e),
            };
            let p = privacy_report(&r.ledger);
            into_out(
                out,
                RecourseOutcome {
                    steps: r.recourse.steps.clone(),
                    counterfactual: r.counterfactual.values.clone(),
                    final_score: *r.path_scores.last().unwrap_or(&f64::NAN),
                    privacy: RecoursePrivacy {
                        explore: p.explore,
                        exploit: p.exploit,
                        enhance: p.enhance,
                        total: p.total,
                    },
                    trace_json,
                },
            );
            RecourseStatus::Ok
        }
        Err(f) => fail(RecourseStatus::NoRecourse, f.to_string()),
    }
}

/// Explain training row `row`.
///
/// # Safety
/// `e` and `config` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn recourse_explain_row(
    e: *const RecourseExplainer,
    row: usize,
    config: *const RecourseConfig,
    out: *mut *mut RecourseOutcome,
) -> RecourseStatus {
    guard(|| {
        // SAFETY: caller contract.
        let (Some(e), Some(config)) = (unsafe { e.as_ref() }, unsafe { config.as_ref() }) else {
            return fail(RecourseStatus::NullPointer, "explainer or config is null");
        };
        if out.is_null() {
            return fail(RecourseStatus::NullPointer, "out is null");
        }
        match e.0.dataset().instance(row) {
            Ok(f) => run_explain(&e.0, f, config, out),
            Err(err) => from_core(err),
        }
    })
}

/// Explain a standardized point.
///
/// # Safety
/// `x` must hold `dim` doubles; other pointers as in [`recourse_explain_row`].
#[no_mangle]
pub unsafe extern "C" fn recourse_explain_point(
    e: *const RecourseExplainer,
    x: *const f64,
    dim: usize,
    config: *const RecourseConfig,
    out: *mut *mut RecourseOutcome,
) -> RecourseStatus {
    guard(|| {
        // SAFETY: caller contract.
        let (Some(e), Some(config), Some(x)) = (unsafe { e.as_ref() }, unsafe { config.as_ref() }, unsafe {
            slice(x, dim)
        }) else {
            return fail(RecourseStatus::NullPointer, "explainer, config or point is null");
        };
        if out.is_null() {
            return fail(RecourseStatus::NullPointer, "out is null");
        }
        let expected = e.0.dataset().dim();
        if dim != expected {
            return fail(
                RecourseStatus::DimensionMismatch,
                format!("point has {dim} features, dataset has {expected}"),
            );
        }
        match Instance::new(x.to_vec()) {
            Ok(f) => run_explain(&e.0, f, config, out),
            Err(err) => from_core(err),
        }
    })
}

/// Number of recourse steps.
///
/// # Safety
/// `o` must be null or a live outcome.
#[no_mangle]
pub unsafe extern "C" fn recourse_outcome_steps(o: *const RecourseOutcome) -> usize {
    // SAFETY: caller contract.
    unsafe { o.as_ref() }.map_or(0, |o| o.steps.len())
}

/// Feature count of the outcome's vectors.
///
/// # Safety
/// `o` must be null or a live outcome.
#[no_mangle]
pub unsafe extern "C" fn recourse_outcome_dim(o: *const RecourseOutcome) -> usize {
    // SAFETY: caller contract.
    unsafe { o.as_ref() }.map_or(0, |o| o.counterfactual.len())
}

/// Copy step `i` into `out`.
///
/// # Safety
/// `o` must be live; `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn recourse_outcome_step(
    o: *const RecourseOutcome,
    i: usize,
    out: *mut f64,
    len: usize,
) -> RecourseStatus {
    // SAFETY: caller contract.
    let Some(o) = (unsafe { o.as_ref() }) else {
        return fail(RecourseStatus::NullPointer, "outcome is null");
    };
    match o.steps.get(i) {
        Some(s) => copy_out(s, out, len),
        None => fail(RecourseStatus::InvalidArgument, format!("step {i} out of range")),
    }
}

/// Copy the counterfactual into `out`.
///
/// # Safety
/// `o` must be live; `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn recourse_outcome_counterfactual(
    o: *const RecourseOutcome,
    out: *mut f64,
    len: usize,
) -> RecourseStatus {
    // SAFETY: caller contract.
    match unsafe { o.as_ref() } {
        Some(o) => copy_out(&o.counterfactual, out, len),
        None => fail(RecourseStatus::NullPointer, "outcome is null"),
    }
}

/// Classifier score at the end of the path.
///
/// # Safety
/// `o` must be null or a live outcome.
#[no_mangle]
pub unsafe extern "C" fn recourse_outcome_score(o: *const RecourseOutcome) -> f64 {
    // SAFETY: caller contract.
    unsafe { o.as_ref() }.map_or(f64::NAN, |o| o.final_score)
}

/// # Safety
/// `o` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn recourse_outcome_privacy(
    o: *const RecourseOutcome,
    out: *mut RecoursePrivacy,
) -> RecourseStatus {
    // SAFETY: caller contract.
    let Some(o) = (unsafe { o.as_ref() }) else {
        return fail(RecourseStatus::NullPointer, "outcome is null");
    };
    if out.is_null() {
        return fail(RecourseStatus::NullPointer, "out is null");
    }
    // SAFETY: checked non-null.
    unsafe { *out = o.privacy };
    RecourseStatus::Ok
}

/// JSON trace document; release with [`recourse_string_free`].
///
/// # Safety
/// `o` must be null or a live outcome.
#[no_mangle]
pub unsafe extern "C" fn recourse_outcome_trace_json(o: *const RecourseOutcome) -> *mut c_char {
    // SAFETY: caller contract.
    match unsafe { o.as_ref() } {
        Some(o) => CString::new(o.trace_json.clone()).map_or(ptr::null_mut(), CString::into_raw),
        None => {
            set_error("outcome is null");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `o` must be null or an outcome not yet freed.
#[no_mangle]
pub unsafe extern "C" fn recourse_outcome_free(o: *mut RecourseOutcome) {
    if !o.is_null() {
        // SAFETY: produced by `Box::into_raw`.
        drop(unsafe { Box::from_raw(o) });
    }
}
