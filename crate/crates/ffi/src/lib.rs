//! C interface to `liftgan`: load a trained generator, lift 2D poses, and
//! score skeletons.
//!
//! Poses are flat row-major `double` arrays: 28 values per 2D pose
//! (`x1, y1, …, x14, y14`) and 42 per 3D skeleton. Every function returns an
//! [`LgStatus`]; on failure [`lg_last_error`] describes what went wrong.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use liftgan::eval::{flat_baseline, mpjpe};
use liftgan::gan::LiftModel;
use liftgan::geometry::{perspective_project, LiftConfig, Pose2D, Skeleton3D, POSE_DIM, SKELETON_DIM};
use liftgan::Error;

/// Values per 2D pose.
pub const LG_POSE_DIM: usize = 28;
/// Values per 3D skeleton.
pub const LG_SKELETON_DIM: usize = 42;

const _: () = assert!(LG_POSE_DIM == POSE_DIM && LG_SKELETON_DIM == SKELETON_DIM);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    Shape = 5,
    NonFinite = 6,
    Degenerate = 7,
    Parse = 8,
    Domain = 9,
    Diverged = 10,
    /// A Rust panic was caught at the boundary.
    Internal = 99,
}

impl From<&Error> for LgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => LgStatus::Domain,
            Error::Shape(_) => LgStatus::Shape,
            Error::NonFinite(_) => LgStatus::NonFinite,
            Error::Parse { .. } => LgStatus::Parse,
            Error::Config(_) => LgStatus::Config,
            Error::Degenerate(_) => LgStatus::Degenerate,
            Error::Diverged { .. } => LgStatus::Diverged,
            Error::Io(_) => LgStatus::Io,
        }
    }
}

/// Opaque handle to a loaded generator.
pub struct LgModel {
    inner: LiftModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), (LgStatus, String)>) -> LgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LgStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LgStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (LgStatus, String) {
    (LgStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (LgStatus, String) {
    (LgStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must point to `n * dim` readable doubles when non-null.
unsafe fn input<'a>(p: *const f64, n: usize, dim: usize, what: &str) -> Result<&'a [f64], (LgStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    let len = n
        .checked_mul(dim)
        .ok_or((LgStatus::InvalidArgument, format!("{what}: count overflows")))?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must point to `n * dim` writable doubles when non-null.
unsafe fn output<'a>(p: *mut f64, n: usize, dim: usize, what: &str) -> Result<&'a mut [f64], (LgStatus, String)> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    let len = n
        .checked_mul(dim)
        .ok_or((LgStatus::InvalidArgument, format!("{what}: count overflows")))?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn poses(flat: &[f64]) -> Result<Vec<Pose2D>, (LgStatus, String)> {
    flat.chunks_exact(POSE_DIM)
        .map(|c| Pose2D::from_flat(c).map_err(lib_err))
        .collect()
}

fn skeletons(flat: &[f64]) -> Result<Vec<Skeleton3D>, (LgStatus, String)> {
    flat.chunks_exact(SKELETON_DIM)
        .map(|c| Skeleton3D::from_flat(c).map_err(lib_err))
        .collect()
}

fn write_skeletons(out: &mut [f64], sk: &[Skeleton3D]) {
    for (o, s) in out.chunks_exact_mut(SKELETON_DIM).zip(sk) {
        o.copy_from_slice(&s.to_flat());
    }
}

/// The message of the last failed call on this thread, or null after a
/// successful one. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads the checkpoint directory `path` and stores a new handle in `*out`.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lg_model_load(path: *const c_char, out: *mut *mut LgModel) -> LgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let s = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (LgStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let inner = LiftModel::load(Path::new(s)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(LgModel { inner }));
        Ok(())
    })
}

/// Releases a handle from [`lg_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lg_model_free(model: *mut LgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Lifts `n` poses into `out` (`n * 42` doubles). Raw poses are centered and
/// scaled with the checkpoint's statistics first unless `normalized` is
/// nonzero. Skeletons are in normalized units.
///
/// # Safety
/// `model` must be a live handle, `poses` must hold `n * 28` doubles and
/// `out` must have room for `n * 42`.
#[no_mangle]
pub unsafe extern "C" fn lg_model_lift(
    model: *mut LgModel,
    poses_2d: *const f64,
    n: usize,
    normalized: i32,
    out: *mut f64,
) -> LgStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        let p = poses(input(poses_2d, n, POSE_DIM, "poses")?)?;
        let o = output(out, n, SKELETON_DIM, "out")?;
        let sk = if normalized != 0 {
            m.inner.lift_normalized(&p)
        } else {
            m.inner.lift_raw(&p)
        }
        .map_err(lib_err)?;
        write_skeletons(o, &sk);
        Ok(())
    })
}

/// The constant-depth lift: every joint at depth `distance + 1`.
///
/// # Safety
/// `poses_2d` must hold `n * 28` doubles and `out` room for `n * 42`.
#[no_mangle]
pub unsafe extern "C" fn lg_flat_baseline(poses_2d: *const f64, n: usize, distance: f64, out: *mut f64) -> LgStatus {
    guard(|| {
        let cfg = LiftConfig::new(distance).map_err(lib_err)?;
        let p = poses(input(poses_2d, n, POSE_DIM, "poses")?)?;
        let o = output(out, n, SKELETON_DIM, "out")?;
        write_skeletons(o, &flat_baseline(&p, &cfg).map_err(lib_err)?);
        Ok(())
    })
}

/// Pinhole projection `(X/Z, Y/Z)` of `n` skeletons into `out`
/// (`n * 28` doubles).
///
/// # Safety
/// `skeletons` must hold `n * 42` doubles and `out` room for `n * 28`.
#[no_mangle]
pub unsafe extern "C" fn lg_project(skeletons_3d: *const f64, n: usize, out: *mut f64) -> LgStatus {
    guard(|| {
        let sk = skeletons(input(skeletons_3d, n, SKELETON_DIM, "skeletons")?)?;
        let o = output(out, n, POSE_DIM, "out")?;
        for (chunk, s) in o.chunks_exact_mut(POSE_DIM).zip(&sk) {
            perspective_project(s).map_err(lib_err)?.write_flat(chunk);
        }
        Ok(())
    })
}

/// Mean per-joint error after similarity alignment, times `unit_scale_mm`,
/// averaged over `n` pairs into `*mean_mm`. `per_sample_mm` may be null;
/// otherwise it receives `n` values.
///
/// # Safety
/// `pred` and `gt` must hold `n * 42` doubles, `mean_mm` must be valid and
/// `per_sample_mm`, when non-null, must have room for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn lg_mpjpe(
    pred: *const f64,
    gt: *const f64,
    n: usize,
    unit_scale_mm: f64,
    mean_mm: *mut f64,
    per_sample_mm: *mut f64,
) -> LgStatus {
    guard(|| {
        if mean_mm.is_null() {
            return Err(null("mean_mm"));
        }
        if !(unit_scale_mm.is_finite() && unit_scale_mm > 0.0) {
            return Err((LgStatus::InvalidArgument, "unit_scale_mm must be positive".into()));
        }
        let p = skeletons(input(pred, n, SKELETON_DIM, "pred")?)?;
        let g = skeletons(input(gt, n, SKELETON_DIM, "gt")?)?;
        let report = mpjpe(&p, &g, None, unit_scale_mm).map_err(lib_err)?;
        if !per_sample_mm.is_null() {
            output(per_sample_mm, n, 1, "per_sample_mm")?.copy_from_slice(&report.per_sample_mm);
        }
        *mean_mm = report.overall_mpjpe_mm;
        Ok(())
    })
}
