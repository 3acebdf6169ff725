//! Drive the C surface the way a foreign binding would: through the
//! exported extern "C" functions with raw pointers and C strings.

use std::ffi::{CStr, CString};
use std::ptr;

use coxsgd_ffi::*;

fn c(text: &str) -> CString {
    CString::new(text).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(coxsgd_last_error()) }
        .to_string_lossy()
        .into_owned()
}

const SPEC_JSON: &str = r#"{
    "dim": 2,
    "covariates": {"low": 0.0, "high": 1.0},
    "risk": {"kind": "Linear", "theta0": [1.0, 1.0]},
    "censoring": {"kind": "Exponential", "rate": 0.5}
}"#;

fn simulate(n: usize, seed: u64) -> *mut CoxsgdDataset {
    let spec = c(SPEC_JSON);
    let mut handle: *mut CoxsgdDataset = ptr::null_mut();
    let status = unsafe { coxsgd_dataset_simulate(spec.as_ptr(), n, seed, &mut handle) };
    assert_eq!(status, CoxsgdStatus::Ok, "{}", last_error());
    assert!(!handle.is_null());
    handle
}

#[test]
fn version_is_exposed() {
    let version = unsafe { CStr::from_ptr(coxsgd_version()) };
    assert!(!version.to_bytes().is_empty());
}

#[test]
fn simulate_query_and_free() {
    let handle = simulate(200, 42);
    unsafe {
        assert_eq!(coxsgd_dataset_len(handle), 200);
        assert_eq!(coxsgd_dataset_dim(handle), 2);
        let events = coxsgd_dataset_n_events(handle);
        assert!(events > 100 && events <= 200);
        coxsgd_dataset_free(handle);
    }
}

#[test]
fn csv_round_trip_through_c_surface() {
    let dir = std::env::temp_dir().join("coxsgd_ffi_csv");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("data.csv");
    let path_c = c(path.to_str().unwrap());

    let handle = simulate(64, 7);
    unsafe {
        let status = coxsgd_dataset_to_csv(handle, path_c.as_ptr());
        assert_eq!(status, CoxsgdStatus::Ok, "{}", last_error());

        let mut back: *mut CoxsgdDataset = ptr::null_mut();
        let status = coxsgd_dataset_from_csv(path_c.as_ptr(), &mut back);
        assert_eq!(status, CoxsgdStatus::Ok, "{}", last_error());
        assert_eq!(coxsgd_dataset_len(back), 64);
        assert_eq!(coxsgd_dataset_dim(back), 2);
        coxsgd_dataset_free(back);
        coxsgd_dataset_free(handle);
    }
}

#[test]
fn loss_and_gradient_evaluate() {
    let handle = simulate(50, 9);
    let theta = [0.5, -0.25];
    let mut loss = f64::NAN;
    unsafe {
        let status = coxsgd_full_loss(handle, theta.as_ptr(), 2, &mut loss);
        assert_eq!(status, CoxsgdStatus::Ok, "{}", last_error());
        assert!(loss.is_finite() && loss >= 0.0);

        let indices: Vec<usize> = (0..10).collect();
        let mut grad = [f64::NAN; 2];
        let status = coxsgd_batch_gradient(
            handle,
            indices.as_ptr(),
            indices.len(),
            theta.as_ptr(),
            2,
            grad.as_mut_ptr(),
        );
        assert_eq!(status, CoxsgdStatus::Ok, "{}", last_error());
        assert!(grad.iter().all(|g| g.is_finite()));
        coxsgd_dataset_free(handle);
    }
}

#[test]
fn sgd_fit_approaches_newton() {
    let handle = simulate(512, 11);
    let config = c(r#"{
        "sampler": {"strategy": "FB", "s": 32, "seed": 3},
        "schedule": {"kind": "EpochPolynomial", "c": 4.0},
        "epochs": 150,
        "projection_radius": 1e6,
        "epoch_cycling": true
    }"#);
    let mut sgd = [0.0f64; 2];
    let mut newton = [0.0f64; 2];
    unsafe {
        let status = coxsgd_fit_linear_sgd(handle, config.as_ptr(), sgd.as_mut_ptr(), 2);
        assert_eq!(status, CoxsgdStatus::Ok, "{}", last_error());
        let status = coxsgd_strata_newton(handle, 32, 3, newton.as_mut_ptr(), 2);
        assert_eq!(status, CoxsgdStatus::Ok, "{}", last_error());
        coxsgd_dataset_free(handle);
    }
    let dist: f64 = sgd
        .iter()
        .zip(&newton)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    assert!(dist < 1e-2, "sgd {sgd:?} vs newton {newton:?}");
}

#[test]
fn full_mle_close_to_truth_on_big_sample() {
    let handle = simulate(8000, 13);
    let mut theta = [0.0f64; 2];
    unsafe {
        let status = coxsgd_full_mle(handle, theta.as_mut_ptr(), 2);
        assert_eq!(status, CoxsgdStatus::Ok, "{}", last_error());
        coxsgd_dataset_free(handle);
    }
    for t in theta {
        assert!((t - 1.0).abs() < 0.2, "theta {theta:?}");
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        // Null output pointer.
        let spec = c(SPEC_JSON);
        let status = coxsgd_dataset_simulate(spec.as_ptr(), 10, 1, ptr::null_mut());
        assert_eq!(status, CoxsgdStatus::NullPointer);

        // Invalid JSON.
        let bad = c("{ not json");
        let mut handle: *mut CoxsgdDataset = ptr::null_mut();
        let status = coxsgd_dataset_simulate(bad.as_ptr(), 10, 1, &mut handle);
        assert_eq!(status, CoxsgdStatus::Parse);
        assert!(!last_error().is_empty());

        // Invalid spec (nonlinear risk needs 5 covariates).
        let bad_spec = c(r#"{
            "dim": 3,
            "covariates": {"low": 0.0, "high": 1.0},
            "risk": {"kind": "NonlinearV1"},
            "censoring": {"kind": "None"}
        }"#);
        let status = coxsgd_dataset_simulate(bad_spec.as_ptr(), 10, 1, &mut handle);
        assert_eq!(status, CoxsgdStatus::InvalidConfig);

        // Missing file.
        let missing = c("/nonexistent/coxsgd.csv");
        let status = coxsgd_dataset_from_csv(missing.as_ptr(), &mut handle);
        assert_eq!(status, CoxsgdStatus::Io);

        // Dimension mismatch on evaluation.
        let data = simulate(20, 5);
        let theta = [0.1f64; 3];
        let mut loss = 0.0;
        let status = coxsgd_full_loss(data, theta.as_ptr(), 3, &mut loss);
        assert_eq!(status, CoxsgdStatus::InvalidConfig);
        assert!(last_error().contains("does not match"));
        coxsgd_dataset_free(data);
    }
}

#[test]
fn generated_header_exists_and_covers_surface() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("coxsgd.h");
    let text = std::fs::read_to_string(&header).expect("cbindgen header should be generated");
    for symbol in [
        "coxsgd_dataset_from_csv",
        "coxsgd_dataset_simulate",
        "coxsgd_dataset_free",
        "coxsgd_full_loss",
        "coxsgd_batch_gradient",
        "coxsgd_fit_linear_sgd",
        "coxsgd_strata_newton",
        "coxsgd_full_mle",
        "coxsgd_last_error",
        "CoxsgdStatus",
        "CoxsgdDataset",
    ] {
        assert!(text.contains(symbol), "header is missing {symbol}");
    }
}
