//! C ABI over `cpsynth`.
//!
//! Functions return a [`CpsStatus`]; on failure a message is available from
//! [`cps_last_error`] on the same thread. Objects are opaque handles created
//! by `*_load`/`cps_evaluate` and released by the matching `*_free`.
//! Strings returned as `char *` are owned by the caller and released with
//! [`cps_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cpsynth::annotate::{is_background, AnnotRules};
use cpsynth::cli::cmd_synth;
use cpsynth::coco::{load_coco, load_results, save_coco};
use cpsynth::config::RunConfig;
use cpsynth::eval::{evaluate, Detection, EvalConfig, EvalReport};
use cpsynth::geometry::BoundingBox;
use cpsynth::{BinaryMask, Dataset, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Runtime = 6,
}

/// Axis-aligned box: top-left corner plus width and height, in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpsBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// A loaded COCO dataset.
pub struct CpsDataset(Dataset);

/// A loaded list of scored detections.
pub struct CpsDetections(Vec<Detection>);

/// Result of [`cps_evaluate`].
pub struct CpsEvalReport(EvalReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CpsStatus {
    match e {
        Error::Io { .. } | Error::Image { .. } | Error::Csv { .. } => CpsStatus::Io,
        Error::Parse { .. } | Error::Json(_) => CpsStatus::Parse,
        e if e.is_validation() => CpsStatus::Validation,
        _ => CpsStatus::Runtime,
    }
}

struct Fail(CpsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any failure (panics included) as the last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CpsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CpsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CpsStatus::Runtime
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(CpsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CpsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn to_box(b: &CpsBox) -> Result<BoundingBox, Fail> {
    Ok(BoundingBox::new(b.x, b.y, b.w, b.h)?)
}

unsafe fn mask_arg(data: *const u8, width: u32, height: u32) -> Result<BinaryMask, Fail> {
    if data.is_null() {
        return Err(null("mask data"));
    }
    let bytes = std::slice::from_raw_parts(data, width as usize * height as usize);
    Ok(BinaryMask::from_bytes(width, height, bytes)?)
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Intersection over union of two boxes.
///
/// # Safety
/// `a` and `b` must point to valid boxes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cps_iou(a: *const CpsBox, b: *const CpsBox, out: *mut f64) -> CpsStatus {
    guard(|| {
        let a = to_box(ref_arg(a, "a")?)?;
        let b = to_box(ref_arg(b, "b")?)?;
        *out_arg(out, "out")? = cpsynth::iou(&a, &b);
        Ok(())
    })
}

/// Tight box of a row-major mask (non-zero bytes are foreground).
///
/// # Safety
/// `data` must hold `width * height` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cps_mask_tight_bbox(data: *const u8, width: u32, height: u32, out: *mut CpsBox) -> CpsStatus {
    guard(|| {
        let b = mask_arg(data, width, height)?.tight_bbox()?;
        *out_arg(out, "out")? = CpsBox {
            x: b.x(),
            y: b.y(),
            w: b.w(),
            h: b.h(),
        };
        Ok(())
    })
}

/// Whether a mask's tight box covers the frame closely enough to count as
/// background, under the default annotation rules.
///
/// # Safety
/// `data` must hold `width * height` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cps_mask_is_background(data: *const u8, width: u32, height: u32, out: *mut bool) -> CpsStatus {
    guard(|| {
        let m = mask_arg(data, width, height)?;
        *out_arg(out, "out")? = is_background(&m, &AnnotRules::default())?;
        Ok(())
    })
}

/// Loads a COCO file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cps_dataset_load(path: *const c_char, out: *mut *mut CpsDataset) -> CpsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let d = load_coco(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(CpsDataset(d)));
        Ok(())
    })
}

/// Writes a dataset as COCO JSON.
///
/// # Safety
/// `dataset` must come from [`cps_dataset_load`]; `path` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cps_dataset_save(dataset: *const CpsDataset, path: *const c_char) -> CpsStatus {
    guard(|| {
        let d = ref_arg(dataset, "dataset")?;
        save_coco(&d.0, &path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of images; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or come from [`cps_dataset_load`].
#[no_mangle]
pub unsafe extern "C" fn cps_dataset_image_count(dataset: *const CpsDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.images.len())
}

/// Number of annotated objects; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or come from [`cps_dataset_load`].
#[no_mangle]
pub unsafe extern "C" fn cps_dataset_object_count(dataset: *const CpsDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.object_count())
}

/// # Safety
/// `dataset` must be null or come from [`cps_dataset_load`], and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn cps_dataset_free(dataset: *mut CpsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Loads a COCO results file (a JSON array of scored boxes).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cps_detections_load(path: *const c_char, out: *mut *mut CpsDetections) -> CpsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let d = load_results(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(CpsDetections(d)));
        Ok(())
    })
}

/// Number of detections; 0 for a null handle.
///
/// # Safety
/// `detections` must be null or come from [`cps_detections_load`].
#[no_mangle]
pub unsafe extern "C" fn cps_detections_count(detections: *const CpsDetections) -> usize {
    detections.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `detections` must be null or come from [`cps_detections_load`], and not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cps_detections_free(detections: *mut CpsDetections) {
    if !detections.is_null() {
        drop(Box::from_raw(detections));
    }
}

/// Evaluates detections against ground truth with the default settings
/// (AP at IoU 0.50, FP_N at confidence 0.10, confusion matrix at 0.25/0.45).
/// Images in the `negative` split feed FP_N only.
///
/// # Safety
/// `gt` and `detections` must be valid handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cps_evaluate(
    gt: *const CpsDataset,
    detections: *const CpsDetections,
    out: *mut *mut CpsEvalReport,
) -> CpsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let gt = ref_arg(gt, "gt")?;
        let dets = ref_arg(detections, "detections")?;
        let r = evaluate(&gt.0, &dets.0, &EvalConfig::default())?;
        *out = Box::into_raw(Box::new(CpsEvalReport(r)));
        Ok(())
    })
}

/// Mean AP at IoU 0.50 over classes with ground truth; NaN when no class
/// has any (or for a null handle).
///
/// # Safety
/// `report` must be null or come from [`cps_evaluate`].
#[no_mangle]
pub unsafe extern "C" fn cps_eval_report_ap50(report: *const CpsEvalReport) -> f64 {
    report.as_ref().and_then(|r| r.0.union.ap50).unwrap_or(f64::NAN)
}

/// False positives per negative image; NaN when the dataset has no
/// negative images (or for a null handle).
///
/// # Safety
/// `report` must be null or come from [`cps_evaluate`].
#[no_mangle]
pub unsafe extern "C" fn cps_eval_report_fp_n(report: *const CpsEvalReport) -> f64 {
    report
        .as_ref()
        .and_then(|r| r.0.fp_n.as_ref().map(|f| f.value))
        .unwrap_or(f64::NAN)
}

/// The full report as JSON; free with [`cps_string_free`]. Null on failure.
///
/// # Safety
/// `report` must be null or come from [`cps_evaluate`].
#[no_mangle]
pub unsafe extern "C" fn cps_eval_report_to_json(report: *const CpsEvalReport) -> *mut c_char {
    let mut result = ptr::null_mut();
    guard(|| {
        let r = ref_arg(report, "report")?;
        let s = serde_json::to_string_pretty(&r.0).map_err(Error::from)?;
        result = CString::new(s)
            .map_err(|e| Fail(CpsStatus::Runtime, e.to_string()))?
            .into_raw();
        Ok(())
    });
    result
}

/// # Safety
/// `report` must be null or come from [`cps_evaluate`], and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn cps_eval_report_free(report: *mut CpsEvalReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cps_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs the `synth` command: loads the config file and writes the image
/// set into `out_dir`. A null `out_dir` falls back to the config's output path.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out_dir` must be null or
/// one.
#[no_mangle]
pub unsafe extern "C" fn cps_synth_run(config_path: *const c_char, out_dir: *const c_char) -> CpsStatus {
    guard(|| {
        let cfg = RunConfig::load(&path_arg(config_path, "config_path")?)?;
        let out = if out_dir.is_null() {
            cfg.path(&cfg.paths.output)
                .ok_or_else(|| Fail(CpsStatus::Validation, "no output directory given".into()))?
        } else {
            path_arg(out_dir, "out_dir")?
        };
        cmd_synth(&cfg, &out)?;
        Ok(())
    })
}
