//! C ABI for the rigidlab core: opaque handles, integer error codes, and
//! a thread-local last-error message. The matching header is maintained by
//! hand at `include/rigidlab.h`.
//!
//! Conventions:
//! - every constructor returns an owned handle or null on failure;
//! - every other call returns an `RL_*` error code and writes results
//!   through out-pointers;
//! - string and array arguments are read-only borrows for the call;
//! - after any failure, `rl_last_error` copies a NUL-terminated message.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr};

use rigidlab::gfqi::Gfqi;
use rigidlab::hamlang::{Dims, Expression, Smoothness};
use rigidlab::minmax::{gamma_distance, gamma_invariant};
use rigidlab::phase::{poisson_bracket, Domain, PhasePoint, ScalarField};

pub const RL_OK: c_int = 0;
pub const RL_NULL_ARGUMENT: c_int = 1;
pub const RL_INVALID_UTF8: c_int = 2;
pub const RL_PARSE_ERROR: c_int = 3;
pub const RL_EVAL_ERROR: c_int = 4;
pub const RL_DIMENSION_MISMATCH: c_int = 5;
pub const RL_RUNTIME_ERROR: c_int = 6;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl std::fmt::Display) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.to_string());
}

/// Opaque parsed expression.
pub struct RlExpression(Expression);
/// Opaque Hamiltonian on phase space.
pub struct RlField(ScalarField);
/// Opaque generating function quadratic at infinity.
pub struct RlGfqi(Gfqi);

/// Copies the message of the most recent failure on this thread into
/// `buf` (NUL-terminated, truncated to `len`). Returns the full message
/// length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn rl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Parses `source` over the layout `q1..qd, p1..pd, xi1..xik, t`.
/// Returns an owned handle, or null (see `rl_last_error`).
///
/// # Safety
/// `source` must be a NUL-terminated string valid for the call.
#[no_mangle]
pub unsafe extern "C" fn rl_expression_parse(
    source: *const c_char,
    d: usize,
    k: usize,
) -> *mut RlExpression {
    if source.is_null() {
        set_error("source is null");
        return std::ptr::null_mut();
    }
    let src = match CStr::from_ptr(source).to_str() {
        Ok(s) => s,
        Err(e) => {
            set_error(format!("source is not UTF-8: {}", e));
            return std::ptr::null_mut();
        }
    };
    match Expression::parse(src, Dims { d, k }) {
        Ok(e) => Box::into_raw(Box::new(RlExpression(e))),
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `expr` must be a handle from `rl_expression_parse` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_expression_free(expr: *mut RlExpression) {
    if !expr.is_null() {
        drop(Box::from_raw(expr));
    }
}

/// Evaluates at the flat point `vars[0..nvars]` (missing trailing slots
/// read as zero) and writes the value to `out`.
///
/// # Safety
/// `expr` must be live; `vars` must point to `nvars` doubles; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_expression_eval(
    expr: *const RlExpression,
    vars: *const c_double,
    nvars: usize,
    out: *mut c_double,
) -> c_int {
    if expr.is_null() || (vars.is_null() && nvars > 0) || out.is_null() {
        set_error("null argument");
        return RL_NULL_ARGUMENT;
    }
    let vars = std::slice::from_raw_parts(vars, nvars);
    match (*expr).0.eval(vars) {
        Ok(v) => {
            *out = v;
            RL_OK
        }
        Err(e) => {
            set_error(e);
            RL_EVAL_ERROR
        }
    }
}

/// Writes the exact gradient with respect to the first `n` flat variables
/// into `out[0..n]`.
///
/// # Safety
/// `expr` must be live; `vars` holds `nvars` doubles; `out` holds `n`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rl_expression_gradient(
    expr: *const RlExpression,
    vars: *const c_double,
    nvars: usize,
    n: usize,
    out: *mut c_double,
) -> c_int {
    if expr.is_null() || (vars.is_null() && nvars > 0) || out.is_null() {
        set_error("null argument");
        return RL_NULL_ARGUMENT;
    }
    let vars = std::slice::from_raw_parts(vars, nvars);
    match (*expr).0.gradient_n(vars, n) {
        Ok(g) => {
            let m = g.len().min(n);
            std::ptr::copy_nonoverlapping(g.as_ptr(), out, m);
            RL_OK
        }
        Err(e) => {
            set_error(e);
            RL_EVAL_ERROR
        }
    }
}

/// Smoothness class of a parsed expression: 0 smooth, 1 C^{1,1},
/// 2 Lipschitz; -1 on a null handle.
///
/// # Safety
/// `expr` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn rl_expression_smoothness(expr: *const RlExpression) -> c_int {
    if expr.is_null() {
        return -1;
    }
    match (*expr).0.smoothness() {
        Smoothness::Smooth => 0,
        Smoothness::C11 => 1,
        Smoothness::C0Lipschitz => 2,
    }
}

/// Hamiltonian on all of phase space from a parsed phase-only expression
/// (k must be 0). Consumes nothing; the expression stays owned by the
/// caller.
///
/// # Safety
/// `expr` must be live.
#[no_mangle]
pub unsafe extern "C" fn rl_field_from_expression(expr: *const RlExpression) -> *mut RlField {
    if expr.is_null() {
        set_error("expression is null");
        return std::ptr::null_mut();
    }
    let e = (*expr).0.clone();
    let dim = 2 * e.dims().d;
    match ScalarField::from_expression(e, Domain::Full { dim }) {
        Ok(f) => Box::into_raw(Box::new(RlField(f))),
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// Built-in catalog entry as a Hamiltonian; null when the name is unknown
/// or the entry is not a Hamiltonian.
///
/// # Safety
/// `name` must be a NUL-terminated string valid for the call.
#[no_mangle]
pub unsafe extern "C" fn rl_field_from_catalog(name: *const c_char) -> *mut RlField {
    if name.is_null() {
        set_error("name is null");
        return std::ptr::null_mut();
    }
    let name = match CStr::from_ptr(name).to_str() {
        Ok(s) => s,
        Err(e) => {
            set_error(format!("name is not UTF-8: {}", e));
            return std::ptr::null_mut();
        }
    };
    let Some(entry) = rigidlab::catalog::lookup(name) else {
        set_error(format!("unknown catalog entry `{}`", name));
        return std::ptr::null_mut();
    };
    match entry.scalar_field() {
        Ok(f) => Box::into_raw(Box::new(RlField(f))),
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `field` must be a handle from a field constructor not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_field_free(field: *mut RlField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Poisson bracket `{f, g}` at the phase point `x[0..2d]`.
///
/// # Safety
/// `f`, `g` must be live; `x` holds `2 * rl_field_dof` doubles; `out` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rl_poisson_bracket(
    f: *const RlField,
    g: *const RlField,
    x: *const c_double,
    len: usize,
    out: *mut c_double,
) -> c_int {
    if f.is_null() || g.is_null() || x.is_null() || out.is_null() {
        set_error("null argument");
        return RL_NULL_ARGUMENT;
    }
    let f = &(*f).0;
    let g = &(*g).0;
    if len != 2 * f.d() || f.d() != g.d() {
        set_error("point or operand dimensions differ");
        return RL_DIMENSION_MISMATCH;
    }
    let coords = std::slice::from_raw_parts(x, len).to_vec();
    let p = match PhasePoint::new(f.d(), coords) {
        Ok(p) => p,
        Err(e) => {
            set_error(e);
            return RL_DIMENSION_MISMATCH;
        }
    };
    match poisson_bracket(f, g, &p) {
        Ok(v) => {
            *out = v;
            RL_OK
        }
        Err(e) => {
            set_error(e);
            RL_EVAL_ERROR
        }
    }
}

/// Degrees of freedom of a field; 0 on a null handle.
///
/// # Safety
/// `field` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn rl_field_dof(field: *const RlField) -> usize {
    if field.is_null() {
        0
    } else {
        (*field).0.d()
    }
}

/// Generating function from a position-only 1-periodic expression.
///
/// # Safety
/// `expr` must be live.
#[no_mangle]
pub unsafe extern "C" fn rl_gfqi_from_base(expr: *const RlExpression) -> *mut RlGfqi {
    if expr.is_null() {
        set_error("expression is null");
        return std::ptr::null_mut();
    }
    match Gfqi::from_base_function(&(*expr).0) {
        Ok(g) => Box::into_raw(Box::new(RlGfqi(g))),
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `g` must be a handle from a generating-function constructor not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn rl_gfqi_free(g: *mut RlGfqi) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// The gamma invariant of a generating function at the given grid
/// resolution.
///
/// # Safety
/// `g` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rl_gfqi_gamma(
    g: *const RlGfqi,
    resolution: usize,
    c_box: c_double,
    out: *mut c_double,
) -> c_int {
    if g.is_null() || out.is_null() {
        set_error("null argument");
        return RL_NULL_ARGUMENT;
    }
    match gamma_invariant(&(*g).0, resolution, c_box) {
        Ok(v) => {
            *out = v;
            RL_OK
        }
        Err(e) => {
            set_error(e);
            RL_RUNTIME_ERROR
        }
    }
}

/// The gamma distance between two generating functions.
///
/// # Safety
/// `a` and `b` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rl_gfqi_gamma_distance(
    a: *const RlGfqi,
    b: *const RlGfqi,
    resolution: usize,
    c_box: c_double,
    out: *mut c_double,
) -> c_int {
    if a.is_null() || b.is_null() || out.is_null() {
        set_error("null argument");
        return RL_NULL_ARGUMENT;
    }
    match gamma_distance(&(*a).0, &(*b).0, resolution, c_box) {
        Ok(v) => {
            *out = v;
            RL_OK
        }
        Err(e) => {
            set_error(e);
            RL_RUNTIME_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn last_error() -> String {
        let mut buf = vec![0i8; 256];
        unsafe { rl_last_error(buf.as_mut_ptr(), buf.len()) };
        let c = unsafe { CStr::from_ptr(buf.as_ptr()) };
        c.to_string_lossy().into_owned()
    }

    #[test]
    fn parse_eval_gradient_roundtrip() {
        let src = CString::new("q1^2 + 3 * p1").unwrap();
        let e = unsafe { rl_expression_parse(src.as_ptr(), 1, 0) };
        assert!(!e.is_null());
        let vars = [2.0f64, 5.0];
        let mut v = 0.0;
        let code = unsafe { rl_expression_eval(e, vars.as_ptr(), 2, &mut v) };
        assert_eq!(code, RL_OK);
        assert_eq!(v, 19.0);
        let mut g = [0.0f64; 2];
        let code = unsafe { rl_expression_gradient(e, vars.as_ptr(), 2, 2, g.as_mut_ptr()) };
        assert_eq!(code, RL_OK);
        assert_eq!(g, [4.0, 3.0]);
        assert_eq!(unsafe { rl_expression_smoothness(e) }, 0);
        unsafe { rl_expression_free(e) };
    }

    #[test]
    fn parse_failure_reports_message() {
        let src = CString::new("q1 +").unwrap();
        let e = unsafe { rl_expression_parse(src.as_ptr(), 1, 0) };
        assert!(e.is_null());
        assert!(!last_error().is_empty());
    }

    #[test]
    fn bracket_through_the_abi() {
        let name = CString::new("pendulum").unwrap();
        let h = unsafe { rl_field_from_catalog(name.as_ptr()) };
        assert!(!h.is_null());
        assert_eq!(unsafe { rl_field_dof(h) }, 1);
        let src = CString::new("p1").unwrap();
        let e = unsafe { rl_expression_parse(src.as_ptr(), 1, 0) };
        let k = unsafe { rl_field_from_expression(e) };
        assert!(!k.is_null());
        let x = [0.7f64, 0.2];
        let mut v = 0.0;
        let code = unsafe { rl_poisson_bracket(k, h, x.as_ptr(), 2, &mut v) };
        assert_eq!(code, RL_OK);
        // {p, H} = -dH/dq = -sin q
        assert!((v + 0.7f64.sin()).abs() < 1e-12);
        // dimension mismatch is reported, not UB
        let code = unsafe { rl_poisson_bracket(k, h, x.as_ptr(), 1, &mut v) };
        assert_eq!(code, RL_DIMENSION_MISMATCH);
        unsafe {
            rl_expression_free(e);
            rl_field_free(h);
            rl_field_free(k);
        }
    }

    #[test]
    fn gamma_through_the_abi() {
        let src = CString::new("0.5 * cos(6.283185307179586 * q1)").unwrap();
        let e = unsafe { rl_expression_parse(src.as_ptr(), 1, 0) };
        let g = unsafe { rl_gfqi_from_base(e) };
        assert!(!g.is_null());
        let mut v = 0.0;
        let code = unsafe { rl_gfqi_gamma(g, 32, 8.0, &mut v) };
        assert_eq!(code, RL_OK);
        assert!((v - 1.0).abs() < 0.1, "gamma {}", v);
        let mut dist = 0.0;
        let code = unsafe { rl_gfqi_gamma_distance(g, g, 32, 8.0, &mut dist) };
        assert_eq!(code, RL_OK);
        assert!(dist.abs() < 0.1);
        unsafe {
            rl_expression_free(e);
            rl_gfqi_free(g);
        }
    }

    #[test]
    fn null_arguments_are_rejected() {
        let mut v = 0.0;
        let code = unsafe {
            rl_expression_eval(std::ptr::null(), std::ptr::null(), 0, &mut v)
        };
        assert_eq!(code, RL_NULL_ARGUMENT);
        assert!(unsafe { rl_expression_parse(std::ptr::null(), 1, 0) }.is_null());
        unsafe {
            rl_expression_free(std::ptr::null_mut());
            rl_field_free(std::ptr::null_mut());
            rl_gfqi_free(std::ptr::null_mut());
        }
    }
}
