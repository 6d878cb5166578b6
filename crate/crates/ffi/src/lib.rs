//! C ABI over the autotune runtime: legality checks, model predictions,
//! inference and the reference CPU kernels.
//!
//! Every function returns an [`AtStatus`]. On failure a description is kept
//! per thread and can be read with [`at_last_error`]. Handles are opaque and
//! must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use autotune_core::backends::{cpu_execute_conv, cpu_execute_gemm, AnalyticalBackend, Element};
use autotune_core::param_space::{
    is_legal, ConvInput, ConvTuning, DType, GemmInput, GemmTuning, HardwareDescriptor, LegalityVerdict, Problem,
    ProblemKind, TuningParams,
};
use autotune_core::perf_model::PerfModel;
use autotune_core::pipeline::infer;
use autotune_core::Error;

/// Number of GEMM tuning parameters.
pub const AT_GEMM_PARAMS: usize = 8;
/// Number of convolution tuning parameters.
pub const AT_CONV_PARAMS: usize = 12;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    IllegalTuning = 5,
    EmptySpace = 6,
    ModelMismatch = 7,
    Unsupported = 8,
    Internal = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtKind {
    Gemm = 0,
    Conv = 1,
}

/// `C = op(A) op(B)`; `dtype_bytes` is 2, 4 or 8.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AtGemmInput {
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub dtype_bytes: u32,
    pub trans_a: bool,
    pub trans_b: bool,
}

/// Stride-1, unpadded convolution of `n` images of `c x h x w`
/// (`h = p + r - 1`, `w = q + s - 1`) with `k` filters of `c x r x s`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AtConvInput {
    pub n: u64,
    pub p: u64,
    pub q: u64,
    pub k: u64,
    pub c: u64,
    pub r: u64,
    pub s: u64,
    pub dtype_bytes: u32,
}

/// Opaque hardware descriptor.
pub struct AtHardware(HardwareDescriptor);

/// Opaque trained performance model.
pub struct AtModel(PerfModel);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> AtStatus {
    match e {
        Error::Invalid { .. } | Error::DimensionMismatch(_) => AtStatus::InvalidArgument,
        Error::IllegalTuning(_) => AtStatus::IllegalTuning,
        Error::EmptySpace => AtStatus::EmptySpace,
        Error::ModelMismatch(_) | Error::Schema { .. } => AtStatus::ModelMismatch,
        Error::Unsupported(_) => AtStatus::Unsupported,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => AtStatus::Parse,
        Error::Io { .. } => AtStatus::Io,
        _ => AtStatus::Internal,
    }
}

struct Failure(AtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AtStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AtStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AtStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn c_path<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure(AtStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

fn dtype(bytes: u32) -> Result<DType, Failure> {
    DType::from_size(bytes)
        .ok_or_else(|| Failure(AtStatus::InvalidArgument, format!("unsupported dtype width {bytes}")))
}

fn gemm_input(i: &AtGemmInput) -> Result<GemmInput, Failure> {
    Ok(GemmInput::new(i.m, i.n, i.k, dtype(i.dtype_bytes)?, i.trans_a, i.trans_b)?)
}

fn conv_input(i: &AtConvInput) -> Result<ConvInput, Failure> {
    Ok(ConvInput::new(i.n, i.p, i.q, i.k, i.c, i.r, i.s, dtype(i.dtype_bytes)?)?)
}

unsafe fn read_tuning<T: TuningParams>(p: *const u32) -> Result<T, Failure> {
    Ok(T::from_values(slice(p, T::NAMES.len(), "tuning")?))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn at_status_message(status: AtStatus) -> *const c_char {
    let s: &'static CStr = match status {
        AtStatus::Ok => c"ok",
        AtStatus::NullPointer => c"null pointer argument",
        AtStatus::InvalidArgument => c"invalid argument",
        AtStatus::Io => c"i/o error",
        AtStatus::Parse => c"parse error",
        AtStatus::IllegalTuning => c"illegal tuning",
        AtStatus::EmptySpace => c"empty legal search space",
        AtStatus::ModelMismatch => c"model mismatch",
        AtStatus::Unsupported => c"unsupported",
        AtStatus::Internal => c"internal error",
        AtStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the full message length
/// excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn at_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn at_hardware_synthetic(out: *mut *mut AtHardware) -> AtStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = Box::into_raw(Box::new(AtHardware(HardwareDescriptor::synthetic_pascal())));
        Ok(())
    })
}

/// Loads a hardware descriptor JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn at_hardware_load(path: *const c_char, out: *mut *mut AtHardware) -> AtStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let hw = HardwareDescriptor::load(c_path(path)?)?;
        *out = Box::into_raw(Box::new(AtHardware(hw)));
        Ok(())
    })
}

/// # Safety
/// `hw` must be null or a handle from `at_hardware_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn at_hardware_free(hw: *mut AtHardware) {
    if !hw.is_null() {
        drop(Box::from_raw(hw));
    }
}

/// Loads a model written by `autotune train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn at_model_load(path: *const c_char, out: *mut *mut AtModel) -> AtStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let model = PerfModel::load(c_path(path)?)?;
        *out = Box::into_raw(Box::new(AtModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from `at_model_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn at_model_free(model: *mut AtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn at_model_kind(model: *const AtModel, out: *mut AtKind) -> AtStatus {
    guard(|| {
        let model = as_ref(model, "model")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = match model.0.kind {
            ProblemKind::Gemm => AtKind::Gemm,
            ProblemKind::Conv => AtKind::Conv,
        };
        Ok(())
    })
}

unsafe fn check<P: Problem>(
    hw: *const AtHardware,
    input: Result<P, Failure>,
    tuning: *const u32,
    legal: *mut bool,
) -> AtStatus {
    guard(|| {
        let hw = as_ref(hw, "hw")?;
        let input = input?;
        let t = read_tuning::<P::Tuning>(tuning)?;
        let legal = legal.as_mut().ok_or_else(|| null("legal"))?;
        *legal = matches!(is_legal(&input, &t, &hw.0), LegalityVerdict::Accepted(_));
        Ok(())
    })
}

/// Sets `*legal` to whether `tuning` (`AT_GEMM_PARAMS` values) runs on `hw`.
///
/// # Safety
/// Pointers must be valid; `tuning` must hold `AT_GEMM_PARAMS` values.
#[no_mangle]
pub unsafe extern "C" fn at_gemm_is_legal(
    hw: *const AtHardware,
    input: *const AtGemmInput,
    tuning: *const u32,
    legal: *mut bool,
) -> AtStatus {
    let input = as_ref(input, "input").and_then(gemm_input);
    check::<GemmInput>(hw, input, tuning, legal)
}

/// # Safety
/// Pointers must be valid; `tuning` must hold `AT_CONV_PARAMS` values.
#[no_mangle]
pub unsafe extern "C" fn at_conv_is_legal(
    hw: *const AtHardware,
    input: *const AtConvInput,
    tuning: *const u32,
    legal: *mut bool,
) -> AtStatus {
    let input = as_ref(input, "input").and_then(conv_input);
    check::<ConvInput>(hw, input, tuning, legal)
}

unsafe fn predict<P: Problem>(
    model: *const AtModel,
    input: Result<P, Failure>,
    tunings: *const u32,
    count: usize,
    out: *mut f64,
) -> AtStatus {
    guard(|| {
        let model = as_ref(model, "model")?;
        let input = input?;
        let width = P::Tuning::NAMES.len();
        let values = slice(tunings, count * width, "tunings")?;
        let out = slice_mut(out, count, "out")?;
        let tunings: Vec<P::Tuning> = values.chunks_exact(width).map(P::Tuning::from_values).collect();
        for (dst, ln) in out.iter_mut().zip(model.0.predict(&input, &tunings)?) {
            *dst = ln.exp();
        }
        Ok(())
    })
}

/// Predicted GFLOPS for `count` tunings stored back to back.
///
/// # Safety
/// `tunings` must hold `count * AT_GEMM_PARAMS` values, `out` `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn at_gemm_predict(
    model: *const AtModel,
    input: *const AtGemmInput,
    tunings: *const u32,
    count: usize,
    out: *mut f64,
) -> AtStatus {
    let input = as_ref(input, "input").and_then(gemm_input);
    predict::<GemmInput>(model, input, tunings, count, out)
}

/// # Safety
/// `tunings` must hold `count * AT_CONV_PARAMS` values, `out` `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn at_conv_predict(
    model: *const AtModel,
    input: *const AtConvInput,
    tunings: *const u32,
    count: usize,
    out: *mut f64,
) -> AtStatus {
    let input = as_ref(input, "input").and_then(conv_input);
    predict::<ConvInput>(model, input, tunings, count, out)
}

unsafe fn run_infer<P: Problem>(
    model: *const AtModel,
    hw: *const AtHardware,
    input: Result<P, Failure>,
    top_k: usize,
    out_tuning: *mut u32,
    out_gflops: *mut f64,
) -> AtStatus {
    guard(|| {
        let model = as_ref(model, "model")?;
        let hw = as_ref(hw, "hw")?;
        let input = input?;
        let out_tuning = slice_mut(out_tuning, P::Tuning::NAMES.len(), "out_tuning")?;
        let out_gflops = out_gflops.as_mut().ok_or_else(|| null("out_gflops"))?;
        model.0.check::<P>()?;
        let backend = AnalyticalBackend::new(hw.0.clone());
        let result = infer(&model.0, &input, &hw.0, &P::default_bounds(), top_k, &backend)?;
        out_tuning.copy_from_slice(&result.tuning.values());
        *out_gflops = result.measured_gflops;
        Ok(())
    })
}

/// Picks a tuning from the default search space: the model ranks every legal
/// configuration and the `top_k` best are re-measured with the analytical
/// backend.
///
/// # Safety
/// Handles must be live; `out_tuning` must hold `AT_GEMM_PARAMS` values.
#[no_mangle]
pub unsafe extern "C" fn at_gemm_infer(
    model: *const AtModel,
    hw: *const AtHardware,
    input: *const AtGemmInput,
    top_k: usize,
    out_tuning: *mut u32,
    out_gflops: *mut f64,
) -> AtStatus {
    let input = as_ref(input, "input").and_then(gemm_input);
    run_infer::<GemmInput>(model, hw, input, top_k, out_tuning, out_gflops)
}

/// # Safety
/// Handles must be live; `out_tuning` must hold `AT_CONV_PARAMS` values.
#[no_mangle]
pub unsafe extern "C" fn at_conv_infer(
    model: *const AtModel,
    hw: *const AtHardware,
    input: *const AtConvInput,
    top_k: usize,
    out_tuning: *mut u32,
    out_gflops: *mut f64,
) -> AtStatus {
    let input = as_ref(input, "input").and_then(conv_input);
    run_infer::<ConvInput>(model, hw, input, top_k, out_tuning, out_gflops)
}

#[allow(clippy::too_many_arguments)]
unsafe fn gemm<T: Element>(
    input: *const AtGemmInput,
    tuning: *const u32,
    a: *const T,
    a_len: usize,
    b: *const T,
    b_len: usize,
    c: *mut T,
    c_len: usize,
) -> AtStatus {
    guard(|| {
        let input = gemm_input(as_ref(input, "input")?)?;
        let t: GemmTuning = read_tuning(tuning)?;
        let run = cpu_execute_gemm(&input, &t, slice(a, a_len, "a")?, slice(b, b_len, "b")?)?;
        let c = slice_mut(c, c_len, "c")?;
        if c.len() != run.c.len() {
            return Err(Failure(
                AtStatus::InvalidArgument,
                format!("c holds {} elements, expected {}", c.len(), run.c.len()),
            ));
        }
        c.copy_from_slice(&run.c);
        Ok(())
    })
}

/// Runs the tiled CPU kernel. `A` is row-major `m x k` (`k x m` when
/// `trans_a`), `B` is `k x n` (`n x k` when `trans_b`), `C` is `m x n`.
///
/// # Safety
/// Buffers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn at_gemm_run_f32(
    input: *const AtGemmInput,
    tuning: *const u32,
    a: *const f32,
    a_len: usize,
    b: *const f32,
    b_len: usize,
    c: *mut f32,
    c_len: usize,
) -> AtStatus {
    gemm(input, tuning, a, a_len, b, b_len, c, c_len)
}

/// # Safety
/// Buffers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn at_gemm_run_f64(
    input: *const AtGemmInput,
    tuning: *const u32,
    a: *const f64,
    a_len: usize,
    b: *const f64,
    b_len: usize,
    c: *mut f64,
    c_len: usize,
) -> AtStatus {
    gemm(input, tuning, a, a_len, b, b_len, c, c_len)
}

/// Runs the implicit-GEMM CPU convolution. Images are `C,H,W,N`, filters
/// `C,R,S,K` and the output `K,P,Q,N`, all row-major.
///
/// # Safety
/// Buffers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn at_conv_run_f32(
    input: *const AtConvInput,
    tuning: *const u32,
    images: *const f32,
    images_len: usize,
    filters: *const f32,
    filters_len: usize,
    out: *mut f32,
    out_len: usize,
) -> AtStatus {
    guard(|| {
        let input = conv_input(as_ref(input, "input")?)?;
        let t: ConvTuning = read_tuning(tuning)?;
        let run = cpu_execute_conv(
            &input,
            &t,
            slice(images, images_len, "images")?,
            slice(filters, filters_len, "filters")?,
        )?;
        let out = slice_mut(out, out_len, "out")?;
        if out.len() != run.output.len() {
            return Err(Failure(
                AtStatus::InvalidArgument,
                format!("out holds {} elements, expected {}", out.len(), run.output.len()),
            ));
        }
        out.copy_from_slice(&run.output);
        Ok(())
    })
}
