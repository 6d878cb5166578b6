use std::ffi::{c_char, CStr, CString};
use std::process::Command;
use std::ptr;

use autotune_core::backends::naive_gemm;
use autotune_core::param_space::{DType, GemmInput};
use autotune_core::perf_model::{FeatureTransform, Mlp, MlpArchitecture, PerfModel, Regressor};
use autotune_ffi::*;

fn wave<T: From<f32>>(len: usize, phase: u32) -> Vec<T> {
    (0..len).map(|i| T::from(((i as f32) * 0.37 + phase as f32).sin())).collect()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { at_last_error(buf.as_mut_ptr(), buf.len()) };
    let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string();
    assert_eq!(msg.len(), n.min(255));
    msg
}

fn synthetic() -> *mut AtHardware {
    let mut hw = ptr::null_mut();
    assert_eq!(unsafe { at_hardware_synthetic(&mut hw) }, AtStatus::Ok);
    assert!(!hw.is_null());
    hw
}

const LINPACK: AtGemmInput = AtGemmInput { m: 512, n: 512, k: 512, dtype_bytes: 4, trans_a: false, trans_b: true };

#[test]
fn legality_round_trip() {
    let hw = synthetic();
    let mut legal = false;
    let ok = [1u32, 1, 8, 8, 8, 1, 1, 1];
    assert_eq!(unsafe { at_gemm_is_legal(hw, &LINPACK, ok.as_ptr(), &mut legal) }, AtStatus::Ok);
    assert!(legal);
    let odd = [3u32, 1, 8, 8, 8, 1, 1, 1];
    assert_eq!(unsafe { at_gemm_is_legal(hw, &LINPACK, odd.as_ptr(), &mut legal) }, AtStatus::Ok);
    assert!(!legal);
    unsafe { at_hardware_free(hw) };
}

#[test]
fn null_and_invalid_arguments_report_codes() {
    let mut legal = false;
    let t = [1u32; AT_GEMM_PARAMS];
    let status = unsafe { at_gemm_is_legal(ptr::null(), &LINPACK, t.as_ptr(), &mut legal) };
    assert_eq!(status, AtStatus::NullPointer);
    assert_eq!(last_error(), "hw is null");

    let hw = synthetic();
    let bad = AtGemmInput { m: 0, ..LINPACK };
    assert_eq!(unsafe { at_gemm_is_legal(hw, &bad, t.as_ptr(), &mut legal) }, AtStatus::InvalidArgument);
    let half = AtGemmInput { dtype_bytes: 3, ..LINPACK };
    assert_eq!(unsafe { at_gemm_is_legal(hw, &half, t.as_ptr(), &mut legal) }, AtStatus::InvalidArgument);
    assert!(last_error().contains("dtype"));
    unsafe { at_hardware_free(hw) };

    let msg = unsafe { CStr::from_ptr(at_status_message(AtStatus::EmptySpace)) };
    assert_eq!(msg.to_str().unwrap(), "empty legal search space");
}

#[test]
fn missing_files_are_io_errors() {
    let path = CString::new("/nonexistent/model.json").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { at_model_load(path.as_ptr(), &mut model) }, AtStatus::Io);
    assert!(model.is_null());
    assert!(last_error().contains("/nonexistent/model.json"));
    let mut hw = ptr::null_mut();
    assert_eq!(unsafe { at_hardware_load(path.as_ptr(), &mut hw) }, AtStatus::Io);
}

#[test]
fn gemm_kernel_matches_reference() {
    let input = AtGemmInput { m: 37, n: 21, k: 50, dtype_bytes: 8, trans_a: true, trans_b: false };
    let a: Vec<f64> = wave(37 * 50, 1);
    let b: Vec<f64> = wave(50 * 21, 2);
    let mut c = vec![0.0f64; 37 * 21];
    let t = [2u32, 1, 8, 4, 4, 2, 2, 2];
    let status = unsafe {
        at_gemm_run_f64(&input, t.as_ptr(), a.as_ptr(), a.len(), b.as_ptr(), b.len(), c.as_mut_ptr(), c.len())
    };
    assert_eq!(status, AtStatus::Ok, "{}", last_error());
    let core = GemmInput::new(37, 21, 50, DType::F64, true, false).unwrap();
    assert!(naive_gemm(&core, &a, &b).max_relative_error(&c) < 1e-12);

    let mut short = vec![0.0f64; 10];
    let status = unsafe {
        at_gemm_run_f64(&input, t.as_ptr(), a.as_ptr(), a.len(), b.as_ptr(), b.len(), short.as_mut_ptr(), short.len())
    };
    assert_eq!(status, AtStatus::InvalidArgument);
    let wrong_type = unsafe { at_gemm_run_f32(&input, t.as_ptr(), ptr::null(), 0, ptr::null(), 0, ptr::null_mut(), 0) };
    assert_ne!(wrong_type, AtStatus::Ok);
}

#[test]
fn conv_kernel_runs() {
    let input = AtConvInput { n: 2, p: 4, q: 4, k: 8, c: 3, r: 3, s: 3, dtype_bytes: 4 };
    let images: Vec<f32> = wave(3 * 6 * 6 * 2, 3);
    let filters: Vec<f32> = wave(3 * 3 * 3 * 8, 4);
    let mut out = vec![0.0f32; 8 * 4 * 4 * 2];
    let t = [1u32; AT_CONV_PARAMS];
    let status = unsafe {
        at_conv_run_f32(
            &input,
            t.as_ptr(),
            images.as_ptr(),
            images.len(),
            filters.as_ptr(),
            filters.len(),
            out.as_mut_ptr(),
            out.len(),
        )
    };
    assert_eq!(status, AtStatus::Ok, "{}", last_error());
    assert!(out.iter().any(|v| *v != 0.0));
}

#[test]
fn model_handle_predicts_and_infers() {
    let dir = tempfile::tempdir().unwrap();
    let arch = MlpArchitecture::new(14, vec![4]).unwrap();
    let regressor = Regressor { transform: FeatureTransform::identity(14), mlp: Mlp::zeros(&arch).unwrap() };
    let model = PerfModel::new::<GemmInput>(regressor).unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { at_model_load(c_path.as_ptr(), &mut handle) }, AtStatus::Ok);
    let mut kind = AtKind::Conv;
    assert_eq!(unsafe { at_model_kind(handle, &mut kind) }, AtStatus::Ok);
    assert_eq!(kind, AtKind::Gemm);

    let tunings = [1u32, 1, 8, 8, 8, 1, 1, 1, 2, 2, 16, 16, 8, 1, 1, 1];
    let mut gflops = [0.0f64; 2];
    assert_eq!(unsafe { at_gemm_predict(handle, &LINPACK, tunings.as_ptr(), 2, gflops.as_mut_ptr()) }, AtStatus::Ok);
    assert!(gflops.iter().all(|g| g.is_finite() && *g > 0.0));

    let hw = synthetic();
    let mut best = [0u32; AT_GEMM_PARAMS];
    let mut measured = 0.0;
    let status = unsafe { at_gemm_infer(handle, hw, &LINPACK, 10, best.as_mut_ptr(), &mut measured) };
    assert_eq!(status, AtStatus::Ok, "{}", last_error());
    assert!(measured > 0.0);
    let mut legal = false;
    unsafe { at_gemm_is_legal(hw, &LINPACK, best.as_ptr(), &mut legal) };
    assert!(legal);

    let conv = AtConvInput { n: 2, p: 4, q: 4, k: 8, c: 3, r: 3, s: 3, dtype_bytes: 4 };
    let mut conv_best = [0u32; AT_CONV_PARAMS];
    let status = unsafe { at_conv_infer(handle, hw, &conv, 10, conv_best.as_mut_ptr(), &mut measured) };
    assert_eq!(status, AtStatus::ModelMismatch);

    unsafe {
        at_model_free(handle);
        at_hardware_free(hw);
        at_model_free(ptr::null_mut());
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/autotune.h");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler).args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, header]).output()
        else {
            eprintln!("{compiler} not available, skipping");
            continue;
        };
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
