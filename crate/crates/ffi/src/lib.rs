//! C ABI for the coxsgd library.
//!
//! Datasets are opaque handles. Every function returns a status code;
//! on any non-zero status the caller can fetch a thread-local message
//! through [`coxsgd_last_error`]. Configuration crosses the boundary as
//! JSON strings so the C surface stays small and stable.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use coxsgd::batching::{BatchSampler, MiniBatch, SamplerConfig};
use coxsgd::cox_linear::LinearCoxModel;
use coxsgd::sgd::{run_sgd, BatchSource, LrSchedule, RecordCadence, RunLength, SgdConfig};
use coxsgd::simulate::SimSpec;
use coxsgd::survival::Dataset;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoxsgdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidConfig = 5,
    Numeric = 6,
    Panic = 7,
}

/// Opaque dataset handle.
pub struct CoxsgdDataset {
    inner: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &coxsgd::Error) -> CoxsgdStatus {
    use coxsgd::Error::*;
    match err {
        Io(_) => CoxsgdStatus::Io,
        CsvParse { .. } | Json(_) => CoxsgdStatus::Parse,
        InvalidConfig(_) | CombinatorialBudget { .. } => CoxsgdStatus::InvalidConfig,
        DimensionMismatch { .. } | InvalidBatch(_) | InvalidRecord(_) | EmptyDataset => {
            CoxsgdStatus::InvalidConfig
        }
        NonFinite { .. }
        | RiskOverflow { .. }
        | SingularMatrix { .. }
        | NewtonNonConvergence { .. }
        | Divergence { .. }
        | Calibration(_) => CoxsgdStatus::Numeric,
    }
}

fn fail(err: &coxsgd::Error) -> CoxsgdStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn guard(body: impl FnOnce() -> CoxsgdStatus) -> CoxsgdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            CoxsgdStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, CoxsgdStatus> {
    if ptr.is_null() {
        set_error("null string pointer");
        return Err(CoxsgdStatus::NullPointer);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error("string is not valid UTF-8");
        CoxsgdStatus::InvalidUtf8
    })
}

unsafe fn dataset_ref<'a>(ptr: *const CoxsgdDataset) -> Result<&'a Dataset, CoxsgdStatus> {
    if ptr.is_null() {
        set_error("null dataset handle");
        return Err(CoxsgdStatus::NullPointer);
    }
    Ok(unsafe { &(*ptr).inner })
}

/// Message describing the most recent error on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn coxsgd_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn coxsgd_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Read a dataset from the CSV format (`x1,...,xp,time,event`).
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid
/// pointer; the returned handle must be released with
/// [`coxsgd_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn coxsgd_dataset_from_csv(
    path: *const c_char,
    out: *mut *mut CoxsgdDataset,
) -> CoxsgdStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return CoxsgdStatus::NullPointer;
        }
        let path = match unsafe { read_str(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        match Dataset::from_csv(Path::new(path)) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(CoxsgdDataset { inner })) };
                CoxsgdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Simulate `n` records from a JSON data-generating spec.
///
/// # Safety
/// `spec_json` must be a valid NUL-terminated string and `out` a valid
/// pointer; the returned handle must be released with
/// [`coxsgd_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn coxsgd_dataset_simulate(
    spec_json: *const c_char,
    n: usize,
    seed: u64,
    out: *mut *mut CoxsgdDataset,
) -> CoxsgdStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return CoxsgdStatus::NullPointer;
        }
        let text = match unsafe { read_str(spec_json) } {
            Ok(t) => t,
            Err(status) => return status,
        };
        let spec: SimSpec = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => {
                set_error(&format!("bad spec JSON: {e}"));
                return CoxsgdStatus::Parse;
            }
        };
        if let Err(e) = spec.validate() {
            return fail(&e);
        }
        let mut rng = coxsgd::rng::stream_rng(seed, 0);
        match spec.draw_dataset(n, &mut rng) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(CoxsgdDataset { inner })) };
                CoxsgdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a dataset handle. Passing NULL is a no-op.
///
/// # Safety
/// `ptr` must be a handle returned by this library, released once.
#[no_mangle]
pub unsafe extern "C" fn coxsgd_dataset_free(ptr: *mut CoxsgdDataset) {
    if !ptr.is_null() {
        drop(unsafe { Box::from_raw(ptr) });
    }
}

/// Number of records.
///
/// # Safety
/// `ptr` must be a valid dataset handle.
#[no_mangle]
pub unsafe extern "C" fn coxsgd_dataset_len(ptr: *const CoxsgdDataset) -> usize {
    unsafe { dataset_ref(ptr) }.map_or(0, Dataset::len)
}

/// Covariate dimension.
///
/// # Safety
/// `ptr` must be a valid dataset handle.
#[no_mangle]
pub unsafe extern "C" fn coxsgd_dataset_dim(ptr: *const CoxsgdDataset) -> usize {
    unsafe { dataset_ref(ptr) }.map_or(0, Dataset::dim)
}

/// Number of records with an observed event.
///
/// # Safety
/// `ptr` must be a valid dataset handle.
#[no_mangle]
pub unsafe extern "C" fn coxsgd_dataset_n_events(ptr: *const CoxsgdDataset) -> usize {
    unsafe { dataset_ref(ptr) }.map_or(0, Dataset::n_events)
}

/// Write the dataset in the CSV format.
///
/// # Safety
/// `ptr` must be a valid dataset handle and `path` a valid
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn coxsgd_dataset_to_csv(
    ptr: *const CoxsgdDataset,
    path: *const c_char,
) -> CoxsgdStatus {
    guard(|| {
        let data = match unsafe { dataset_ref(ptr) } {
            Ok(d) => d,
            Err(status) => return status,
        };
        let path = match unsafe { read_str(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        match data.to_csv(Path::new(path), &[]) {
            Ok(()) => CoxsgdStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

fn linear_model(theta: *const f64, p: usize, dim: usize) -> Result<LinearCoxModel, CoxsgdStatus> {
    if theta.is_null() {
        set_error("null coefficient pointer");
        return Err(CoxsgdStatus::NullPointer);
    }
    if p != dim {
        set_error(&format!(
            "coefficient length {p} does not match dimension {dim}"
        ));
        return Err(CoxsgdStatus::InvalidConfig);
    }
    let values = unsafe { std::slice::from_raw_parts(theta, p) };
    LinearCoxModel::new(ndarray::Array1::from_iter(values.iter().copied())).map_err(|e| fail(&e))
}

/// Full-sample negative log-partial likelihood of a linear model.
///
/// # Safety
/// `ptr` must be a valid dataset handle, `theta` an array of `p`
/// doubles, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn coxsgd_full_loss(
    ptr: *const CoxsgdDataset,
    theta: *const f64,
    p: usize,
    out: *mut f64,
) -> CoxsgdStatus {
    guard(|| {
        let data = match unsafe { dataset_ref(ptr) } {
            Ok(d) => d,
            Err(status) => return status,
        };
        if out.is_null() {
            set_error("null output pointer");
            return CoxsgdStatus::NullPointer;
        }
        let model = match linear_model(theta, p, data.dim()) {
            Ok(m) => m,
            Err(status) => return status,
        };
        match coxsgd::survival::full_loss(data, &model) {
            Ok(loss) => {
                unsafe { *out = loss.value };
                CoxsgdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Mini-batch gradient of the within-batch loss for a linear model.
/// `indices` are record indices forming the batch; `out_grad` receives
/// `p` doubles.
///
/// # Safety
/// Pointers must be valid for the lengths given.
#[no_mangle]
pub unsafe extern "C" fn coxsgd_batch_gradient(
    ptr: *const CoxsgdDataset,
    indices: *const usize,
    s: usize,
    theta: *const f64,
    p: usize,
    out_grad: *mut f64,
) -> CoxsgdStatus {
    guard(|| {
        let data = match unsafe { dataset_ref(ptr) } {
            Ok(d) => d,
            Err(status) => return status,
        };
        if indices.is_null() || out_grad.is_null() {
            set_error("null pointer argument");
            return CoxsgdStatus::NullPointer;
        }
        let model = match linear_model(theta, p, data.dim()) {
            Ok(m) => m,
            Err(status) => return status,
        };
        let batch = MiniBatch::new(unsafe { std::slice::from_raw_parts(indices, s) }.to_vec());
        match coxsgd::cox_linear::batch_gradient(data, &batch, &model) {
            Ok(grad) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out_grad, p) };
                out.copy_from_slice(grad.as_slice().unwrap());
                CoxsgdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[derive(serde::Deserialize)]
struct FitConfig {
    sampler: SamplerConfig,
    schedule: LrSchedule,
    epochs: u64,
    #[serde(default)]
    projection_radius: Option<f64>,
    #[serde(default)]
    averaging: bool,
    #[serde(default)]
    init: Option<Vec<f64>>,
    /// Cycle each epoch through all the data (one pass per epoch).
    #[serde(default)]
    epoch_cycling: bool,
}

/// Fit a linear Cox model by projected SGD. `config_json` example:
/// `{"sampler":{"strategy":"SB","s":64,"seed":1},
///   "schedule":{"kind":"EpochPolynomial","c":4.0},
///   "epochs":100,"projection_radius":1e6}`.
/// `out_theta` receives `p` doubles.
///
/// # Safety
/// Pointers must be valid for the lengths given.
#[no_mangle]
pub unsafe extern "C" fn coxsgd_fit_linear_sgd(
    ptr: *const CoxsgdDataset,
    config_json: *const c_char,
    out_theta: *mut f64,
    p: usize,
) -> CoxsgdStatus {
    guard(|| {
        let data = match unsafe { dataset_ref(ptr) } {
            Ok(d) => d,
            Err(status) => return status,
        };
        if out_theta.is_null() {
            set_error("null output pointer");
            return CoxsgdStatus::NullPointer;
        }
        if p != data.dim() {
            set_error(&format!(
                "output length {p} does not match dimension {}",
                data.dim()
            ));
            return CoxsgdStatus::InvalidConfig;
        }
        let text = match unsafe { read_str(config_json) } {
            Ok(t) => t,
            Err(status) => return status,
        };
        let config: FitConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => {
                set_error(&format!("bad fit config JSON: {e}"));
                return CoxsgdStatus::Parse;
            }
        };

        let mut model = match &config.init {
            Some(theta) => match LinearCoxModel::new(ndarray::Array1::from_vec(theta.clone())) {
                Ok(m) => m,
                Err(e) => return fail(&e),
            },
            None => LinearCoxModel::zeros(data.dim()),
        };
        let sampler = match BatchSampler::new(config.sampler, data.len()) {
            Ok(s) => {
                if config.epoch_cycling {
                    s.with_epoch_cycling()
                } else {
                    s
                }
            }
            Err(e) => return fail(&e),
        };
        let mut source = BatchSource::offline(data, sampler);
        let sgd_config = SgdConfig {
            schedule: config.schedule,
            projection_radius: config.projection_radius,
            run_length: RunLength::Epochs {
                count: config.epochs,
            },
            averaging: config.averaging,
            cadence: RecordCadence::FinalOnly,
        };
        match run_sgd(&mut source, &mut model, &sgd_config, None) {
            Ok(trajectory) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out_theta, p) };
                let result = if config.averaging {
                    trajectory.final_averaged.as_ref().unwrap()
                } else {
                    &trajectory.final_params
                };
                out.copy_from_slice(result);
                CoxsgdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Solve the fixed-batch objective exactly: build the seeded FB
/// partition with batch size `s` and run Newton on the summed
/// per-stratum loss. `out_theta` receives `p` doubles.
///
/// # Safety
/// Pointers must be valid for the lengths given.
#[no_mangle]
pub unsafe extern "C" fn coxsgd_strata_newton(
    ptr: *const CoxsgdDataset,
    s: usize,
    seed: u64,
    out_theta: *mut f64,
    p: usize,
) -> CoxsgdStatus {
    guard(|| {
        let data = match unsafe { dataset_ref(ptr) } {
            Ok(d) => d,
            Err(status) => return status,
        };
        if out_theta.is_null() {
            set_error("null output pointer");
            return CoxsgdStatus::NullPointer;
        }
        if p != data.dim() {
            set_error(&format!(
                "output length {p} does not match dimension {}",
                data.dim()
            ));
            return CoxsgdStatus::InvalidConfig;
        }
        let sampler = match BatchSampler::new(
            SamplerConfig {
                strategy: coxsgd::batching::Strategy::Fb,
                s,
                seed,
            },
            data.len(),
        ) {
            Ok(sampler) => sampler,
            Err(e) => return fail(&e),
        };
        let partition = sampler.partition().unwrap().to_vec();
        match coxsgd::inference::strata_newton(data, &partition) {
            Ok(theta) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out_theta, p) };
                out.copy_from_slice(theta.as_slice().unwrap());
                CoxsgdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Full-sample Cox maximum likelihood by Newton. `out_theta` receives
/// `p` doubles.
///
/// # Safety
/// Pointers must be valid for the lengths given.
#[no_mangle]
pub unsafe extern "C" fn coxsgd_full_mle(
    ptr: *const CoxsgdDataset,
    out_theta: *mut f64,
    p: usize,
) -> CoxsgdStatus {
    guard(|| {
        let data = match unsafe { dataset_ref(ptr) } {
            Ok(d) => d,
            Err(status) => return status,
        };
        if out_theta.is_null() {
            set_error("null output pointer");
            return CoxsgdStatus::NullPointer;
        }
        if p != data.dim() {
            set_error(&format!(
                "output length {p} does not match dimension {}",
                data.dim()
            ));
            return CoxsgdStatus::InvalidConfig;
        }
        match coxsgd::inference::full_mle(data) {
            Ok(theta) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out_theta, p) };
                out.copy_from_slice(theta.as_slice().unwrap());
                CoxsgdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
