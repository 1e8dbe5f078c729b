//! C ABI for the `exmeas` library.
//!
//! Every entry point returns an [`ExmeasStatus`]. On failure the message is
//! kept per thread and read with [`exmeas_last_error`]. Models and
//! expressions are opaque handles released with their `_free` function;
//! strings returned through `char **` out-parameters are released with
//! [`exmeas_string_free`]. Panics are caught at the boundary.

use exmeas::config::ModelConfig;
use exmeas::dsl::{self, Env, Expr, Var};
use exmeas::finiteness;
use exmeas::rng::RngKey;
use exmeas::sampler::{self, SampleError};
use exmeas::types::Status;
use libc::{c_char, c_double, c_int, c_ulonglong};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExmeasStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Parse = 4,
    Eval = 5,
    ResourceCap = 6,
    Sample = 7,
    InvalidArgument = 8,
    Panic = 9,
}

/// Verdict of a certification, as written by [`exmeas_certify`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExmeasVerdict {
    LocallyFinite = 0,
    NotLocallyFinite = 1,
    Inconclusive = 2,
}

/// A loaded model configuration.
pub struct ExmeasModel {
    config: ModelConfig,
}

/// A parsed function expression.
pub struct ExmeasExpr {
    expr: Expr,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, records its error message and converts panics.
fn guard<F>(f: F) -> ExmeasStatus
where
    F: FnOnce() -> Result<(), (ExmeasStatus, String)>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ExmeasStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            ExmeasStatus::Panic
        }
    }
}

type Res<T> = Result<T, (ExmeasStatus, String)>;

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err((ExmeasStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (ExmeasStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn non_null<T>(p: *const T, what: &str) -> Res<()> {
    if p.is_null() {
        Err((ExmeasStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Res<()> {
    let c = CString::new(s).map_err(|_| (ExmeasStatus::InvalidArgument, "output contains a NUL byte".to_string()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn exmeas_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn exmeas_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn exmeas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a model from configuration text (TOML with a `[model]` section).
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn exmeas_model_from_config(text: *const c_char, out: *mut *mut ExmeasModel) -> ExmeasStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = read_str(text, "config text")?;
        let config = ModelConfig::parse(text).map_err(|e| (ExmeasStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(ExmeasModel { config }));
        Ok(())
    })
}

/// Loads a model from a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn exmeas_model_from_file(path: *const c_char, out: *mut *mut ExmeasModel) -> ExmeasStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = read_str(path, "path")?;
        let config = ModelConfig::load(path).map_err(|e| (ExmeasStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(ExmeasModel { config }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn exmeas_model_free(model: *mut ExmeasModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Certifies local finiteness. Writes the verdict and, if `json_out` is not
/// NULL, the per-condition evidence as JSON.
///
/// # Safety
/// `model` must be a live handle; `verdict` a valid pointer; `json_out` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn exmeas_certify(
    model: *const ExmeasModel,
    verdict: *mut ExmeasVerdict,
    json_out: *mut *mut c_char,
) -> ExmeasStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(verdict, "verdict")?;
        let cfg = &(*model).config;
        let v = finiteness::certify(&cfg.model, &cfg.tolerances);
        *verdict = match v.status {
            Status::LocallyFinite => ExmeasVerdict::LocallyFinite,
            Status::NotLocallyFinite => ExmeasVerdict::NotLocallyFinite,
            Status::Inconclusive => ExmeasVerdict::Inconclusive,
        };
        if !json_out.is_null() {
            write_string(json_out, serde_json::to_string(&v).expect("verdict serializes"))?;
        }
        Ok(())
    })
}

/// Samples the window `[0, window]^2` and writes the atoms in the TSV format
/// of the command line tool. A negative `mark_cap` keeps the configured one.
///
/// # Safety
/// `model` must be a live handle and `tsv_out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn exmeas_sample_tsv(
    model: *const ExmeasModel,
    window: c_double,
    mark_cap: c_double,
    seed: c_ulonglong,
    tsv_out: *mut *mut c_char,
) -> ExmeasStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(tsv_out, "tsv_out")?;
        let cfg = &(*model).config;
        let mut tc = cfg.truncation;
        if mark_cap >= 0.0 {
            tc.mark_cap = mark_cap;
        }
        let w = sampler::sample_model(&cfg.model, window, &tc, &RngKey::new(seed)).map_err(|e| match e {
            SampleError::ResourceCap { .. } => (ExmeasStatus::ResourceCap, e.to_string()),
            SampleError::Invalid(_) => (ExmeasStatus::InvalidArgument, e.to_string()),
            SampleError::Model(_) => (ExmeasStatus::Sample, e.to_string()),
        })?;
        write_string(tsv_out, exmeas::cli::atoms_tsv(&w, seed, tc.mark_cap))
    })
}

/// Parses a function expression in the variables x, y, z, k, v.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn exmeas_expr_parse(text: *const c_char, out: *mut *mut ExmeasExpr) -> ExmeasStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = read_str(text, "expression")?;
        let expr = dsl::parse(text).map_err(|e| (ExmeasStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(ExmeasExpr { expr }));
        Ok(())
    })
}

/// Evaluates an expression. `values` holds `n` entries bound in the order
/// x, y, z, k, v; variables past `n` are unbound.
///
/// # Safety
/// `expr` must be a live handle, `values` must point to `n` doubles (or be
/// NULL with `n == 0`) and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn exmeas_expr_eval(
    expr: *const ExmeasExpr,
    values: *const c_double,
    n: c_int,
    out: *mut c_double,
) -> ExmeasStatus {
    guard(|| {
        non_null(expr, "expr")?;
        non_null(out, "out")?;
        if !(0..=5).contains(&n) {
            return Err((ExmeasStatus::InvalidArgument, format!("n must be between 0 and 5, got {n}")));
        }
        let vals: &[f64] = if n == 0 {
            &[]
        } else {
            non_null(values, "values")?;
            std::slice::from_raw_parts(values, n as usize)
        };
        let env = Env::from_pairs(&Var::ALL[..vals.len()], vals);
        *out = dsl::eval(&(*expr).expr, &env).map_err(|e| (ExmeasStatus::Eval, e.to_string()))?;
        Ok(())
    })
}

/// Canonical text of an expression.
///
/// # Safety
/// `expr` must be a live handle and `text_out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn exmeas_expr_print(expr: *const ExmeasExpr, text_out: *mut *mut c_char) -> ExmeasStatus {
    guard(|| {
        non_null(expr, "expr")?;
        non_null(text_out, "text_out")?;
        write_string(text_out, dsl::pretty_print(&(*expr).expr))
    })
}

/// Releases an expression. NULL is ignored.
///
/// # Safety
/// `expr` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn exmeas_expr_free(expr: *mut ExmeasExpr) {
    if !expr.is_null() {
        drop(Box::from_raw(expr));
    }
}
