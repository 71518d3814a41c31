//! C ABI over `netmoment`.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible entry point returns an
//! [`NmStatus`]; on failure the message is available from
//! [`nm_last_error_message`] on the same thread. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::CString;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, c_int, c_long, size_t};
use netmoment::bep::{Bep, BepSolution, Space};
use netmoment::experiments::estimate_moment;
use netmoment::operators::{forward_coeffs, forward_field_many, Magnetization, Target};
use netmoment::spectral::{gram_assemble, rhs_vector, GramCache, GramMatrix, GramOptions};
use netmoment::{Error, Geometry, VerticalAxis};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Contract = 4,
    Numerical = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Problem geometry. `axis` is 0 for up, 1 for down.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NmGeometry {
    pub s: f64,
    pub q: f64,
    pub h: f64,
    pub axis: c_int,
}

/// Norm carrying the budget.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmSpace {
    L2 = 0,
    W012 = 1,
}

/// Opaque assembled Gram matrix together with its geometry.
pub struct NmGram {
    gram: GramMatrix,
    geometry: Geometry,
}

/// Opaque solved estimator.
pub struct NmSolution {
    sol: BepSolution,
    geometry: Geometry,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> NmStatus {
    match e {
        Error::Domain(_) | Error::Singularity(_) => NmStatus::Domain,
        Error::Contract(_) => NmStatus::Contract,
        Error::Assembly(_) | Error::Solver(_) | Error::Bracket { .. } => NmStatus::Numerical,
        Error::Parse(_) | Error::Json(_) => NmStatus::InvalidArgument,
        Error::Io(_) => NmStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), NmStatus>) -> NmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NmStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            NmStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, NmStatus>;
}

impl<T> OrStatus<T> for netmoment::Result<T> {
    fn or_status(self) -> Result<T, NmStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn invalid(msg: &str) -> NmStatus {
    set_error(msg);
    NmStatus::InvalidArgument
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, NmStatus> {
    // SAFETY: caller guarantees `p` is null or valid for reads.
    unsafe { p.as_ref() }.ok_or_else(|| {
        set_error(format!("{what} is null"));
        NmStatus::NullPointer
    })
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, NmStatus> {
    // SAFETY: caller guarantees `p` is null or valid for writes.
    unsafe { p.as_mut() }.ok_or_else(|| {
        set_error(format!("{what} is null"));
        NmStatus::NullPointer
    })
}

unsafe fn slice<'a>(p: *const f64, len: size_t, what: &str) -> Result<&'a [f64], NmStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(NmStatus::NullPointer);
    }
    // SAFETY: non-null and caller guarantees `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn to_geometry(g: &NmGeometry) -> Result<Geometry, NmStatus> {
    let axis = match g.axis {
        0 => VerticalAxis::Up,
        1 => VerticalAxis::Down,
        _ => return Err(invalid("axis must be 0 (up) or 1 (down)")),
    };
    Ok(Geometry::new(g.s, g.q, g.h).or_status()?.with_axis(axis))
}

fn to_space(s: c_int) -> Result<Space, NmStatus> {
    match s {
        0 => Ok(Space::L2),
        1 => Ok(Space::W012),
        _ => Err(invalid("space must be 0 (l2) or 1 (w012)")),
    }
}

fn to_target(t: c_int) -> Result<Target, NmStatus> {
    match t {
        1 => Ok(Target::E1),
        2 => Ok(Target::E2),
        _ => Err(invalid("target must be 1 or 2")),
    }
}

/// Flat `(lo, hi, value)` triples.
unsafe fn magnetization(
    p1: *const f64,
    n1: size_t,
    p2: *const f64,
    n2: size_t,
) -> Result<Magnetization, NmStatus> {
    let a = unsafe { slice(p1, 3 * n1, "pieces1")? };
    let b = unsafe { slice(p2, 3 * n2, "pieces2")? };
    let triples = |v: &[f64]| {
        v.chunks_exact(3)
            .map(|c| (c[0], c[1], c[2]))
            .collect::<Vec<_>>()
    };
    Magnetization::from_triples(&triples(a), &triples(b)).or_status()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL,
/// or 0 if there is none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn nm_last_error_message(buf: *mut c_char, len: size_t) -> size_t {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            // SAFETY: `buf` has room for `len` bytes and `n < len`.
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Assembles (or loads from the on-disk cache when `use_cache != 0`) the
/// Gram matrix of order `order`.
///
/// # Safety
/// `geometry` must be valid for reads, `out` for writes.
#[no_mangle]
pub unsafe extern "C" fn nm_gram_new(
    geometry: *const NmGeometry,
    order: size_t,
    use_cache: c_int,
    out: *mut *mut NmGram,
) -> NmStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out")? };
        *out = ptr::null_mut();
        let g = to_geometry(unsafe { deref(geometry, "geometry")? })?;
        if order == 0 {
            return Err(invalid("order must be at least 1"));
        }
        let opts = GramOptions::default();
        let gram = if use_cache != 0 {
            GramCache::from_env().get_or_assemble(&g, order, &opts)
        } else {
            gram_assemble(&g, order, &opts)
        }
        .or_status()?;
        *out = Box::into_raw(Box::new(NmGram { gram, geometry: g }));
        Ok(())
    })
}

/// Releases a Gram handle. Null is ignored.
///
/// # Safety
/// `gram` must come from [`nm_gram_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nm_gram_free(gram: *mut NmGram) {
    if !gram.is_null() {
        // SAFETY: produced by Box::into_raw in nm_gram_new.
        drop(unsafe { Box::from_raw(gram) });
    }
}

/// Truncation order `N`; 0 for a null handle.
///
/// # Safety
/// `gram` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nm_gram_order(gram: *const NmGram) -> size_t {
    unsafe { gram.as_ref() }.map_or(0, |g| g.gram.order())
}

/// `G_{nk}` for `|n|, |k| <= N`.
///
/// # Safety
/// `gram` must be a live handle; `re`, `im` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nm_gram_entry(
    gram: *const NmGram,
    n: c_long,
    k: c_long,
    re: *mut f64,
    im: *mut f64,
) -> NmStatus {
    guard(|| {
        let g = unsafe { deref(gram, "gram")? };
        let re = unsafe { out_ptr(re, "re")? };
        let im = unsafe { out_ptr(im, "im")? };
        let order = g.gram.order() as c_long;
        if n.abs() > order || k.abs() > order {
            return Err(invalid("mode index exceeds the truncation order"));
        }
        let v = g.gram.entry(n, k);
        *re = v.re;
        *im = v.im;
        Ok(())
    })
}

unsafe fn solve_with(
    gram: *const NmGram,
    target: c_int,
    space: c_int,
    drop_zero_mode: c_int,
    out: *mut *mut NmSolution,
    f: impl FnOnce(&Bep<'_>) -> netmoment::Result<BepSolution>,
) -> NmStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out")? };
        *out = ptr::null_mut();
        let g = unsafe { deref(gram, "gram")? };
        let t = to_target(target)?;
        let space = to_space(space)?;
        let r = rhs_vector(&g.geometry, g.gram.order(), &t).or_status()?;
        let bep = Bep::new(&g.gram, r, t.norm_sq(&g.geometry).or_status()?, space)
            .or_status()?
            .with_zero_mode_dropped(drop_zero_mode != 0);
        let sol = f(&bep).or_status()?;
        *out = Box::into_raw(Box::new(NmSolution {
            sol,
            geometry: g.geometry,
        }));
        Ok(())
    })
}

/// Estimator for moment `target` (1 or 2) at fixed `lambda`.
/// `space` is an [`NmSpace`] value.
///
/// # Safety
/// `gram` must be a live handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nm_solve(
    gram: *const NmGram,
    target: c_int,
    space: c_int,
    lambda: f64,
    drop_zero_mode: c_int,
    out: *mut *mut NmSolution,
) -> NmStatus {
    unsafe {
        solve_with(gram, target, space, drop_zero_mode, out, |b| {
            b.solve(lambda)
        })
    }
}

/// Estimator whose constraint norm equals `m`.
///
/// # Safety
/// As [`nm_solve`].
#[no_mangle]
pub unsafe extern "C" fn nm_solve_for_m(
    gram: *const NmGram,
    target: c_int,
    space: c_int,
    m: f64,
    drop_zero_mode: c_int,
    out: *mut *mut NmSolution,
) -> NmStatus {
    unsafe {
        solve_with(gram, target, space, drop_zero_mode, out, |b| {
            b.solve_for_m(m)
        })
    }
}

/// Releases a solution handle. Null is ignored.
///
/// # Safety
/// `sol` must come from a solve call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nm_solution_free(sol: *mut NmSolution) {
    if !sol.is_null() {
        // SAFETY: produced by Box::into_raw in solve_with.
        drop(unsafe { Box::from_raw(sol) });
    }
}

/// Writes `λ`, the achieved norm `M`, and the residual.
///
/// # Safety
/// `sol` must be a live handle; each output pointer may be null to skip it.
#[no_mangle]
pub unsafe extern "C" fn nm_solution_info(
    sol: *const NmSolution,
    lambda: *mut f64,
    m: *mut f64,
    residual: *mut f64,
) -> NmStatus {
    guard(|| {
        let s = &unsafe { deref(sol, "solution")? }.sol;
        for (p, v) in [
            (lambda, s.lambda),
            (m, s.m_achieved),
            (residual, s.residual),
        ] {
            if let Some(p) = unsafe { p.as_mut() } {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies the `2N+1` coefficients (`n = -N..=N`) into `re` and `im`.
///
/// # Safety
/// `re` and `im` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn nm_solution_coeffs(
    sol: *const NmSolution,
    re: *mut f64,
    im: *mut f64,
    len: size_t,
) -> NmStatus {
    guard(|| {
        let s = &unsafe { deref(sol, "solution")? }.sol;
        let c = s.coeffs.coeffs();
        if len < c.len() {
            set_error(format!("need {} slots, got {len}", c.len()));
            return Err(NmStatus::BufferTooSmall);
        }
        if re.is_null() || im.is_null() {
            set_error("output buffer is null");
            return Err(NmStatus::NullPointer);
        }
        for (i, v) in c.iter().enumerate() {
            // SAFETY: i < c.len() <= len.
            unsafe {
                *re.add(i) = v.re;
                *im.add(i) = v.im;
            }
        }
        Ok(())
    })
}

/// `φ(x)`.
///
/// # Safety
/// `sol` must be a live handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nm_solution_eval(
    sol: *const NmSolution,
    x: f64,
    out: *mut f64,
) -> NmStatus {
    guard(|| {
        let s = unsafe { deref(sol, "solution")? };
        let out = unsafe { out_ptr(out, "out")? };
        *out = s.sol.eval(x);
        Ok(())
    })
}

/// Moment estimate `⟨b₂[m], φ⟩` for a piecewise-constant magnetization given
/// as flat `(lo, hi, value)` triples (`n1`, `n2` triples per component).
///
/// # Safety
/// Piece arrays must hold `3*n1` / `3*n2` doubles; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nm_estimate_moment(
    sol: *const NmSolution,
    pieces1: *const f64,
    n1: size_t,
    pieces2: *const f64,
    n2: size_t,
    out: *mut f64,
) -> NmStatus {
    guard(|| {
        let s = unsafe { deref(sol, "solution")? };
        let out = unsafe { out_ptr(out, "out")? };
        let m = unsafe { magnetization(pieces1, n1, pieces2, n2)? };
        let data = forward_coeffs(&m, &s.geometry, s.sol.coeffs.order()).or_status()?;
        *out = estimate_moment(&data, &s.sol).or_status()?;
        Ok(())
    })
}

/// `b₂[m](x)` at `n` points.
///
/// # Safety
/// `xs` and `out` must hold `n` doubles; piece arrays as in
/// [`nm_estimate_moment`].
#[no_mangle]
pub unsafe extern "C" fn nm_forward_field(
    geometry: *const NmGeometry,
    pieces1: *const f64,
    n1: size_t,
    pieces2: *const f64,
    n2: size_t,
    xs: *const f64,
    n: size_t,
    out: *mut f64,
) -> NmStatus {
    guard(|| {
        let g = to_geometry(unsafe { deref(geometry, "geometry")? })?;
        let m = unsafe { magnetization(pieces1, n1, pieces2, n2)? };
        let xs = unsafe { slice(xs, n, "xs")? };
        if n > 0 && out.is_null() {
            set_error("out is null");
            return Err(NmStatus::NullPointer);
        }
        let v = forward_field_many(&m, &g, xs).or_status()?;
        if n > 0 {
            // SAFETY: caller guarantees `n` writable slots.
            unsafe { ptr::copy_nonoverlapping(v.as_ptr(), out, n) };
        }
        Ok(())
    })
}
