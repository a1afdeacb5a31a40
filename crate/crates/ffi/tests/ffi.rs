use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use cpsynth::coco::{save_coco, save_results};
use cpsynth::eval::Detection;
use cpsynth::geometry::BoundingBox;
use cpsynth::{AnnotatedObject, Category, ColorMode, Dataset, ImageRecord, Source, Split};
use cpsynth_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(cps_last_error()) }.to_string_lossy().into_owned()
}

/// Two positive images with one object each plus one negative image;
/// detections are the ground truth plus one false positive on the negative.
fn write_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let b = BoundingBox::new(10.0, 10.0, 20.0, 30.0).unwrap();
    let mut d = Dataset::new(vec![Category { id: 1, name: "brezel".into() }]).unwrap();
    for (id, split) in [(1, Split::Test), (2, Split::Test), (3, Split::Negative)] {
        let objects = if split == Split::Negative {
            vec![]
        } else {
            vec![AnnotatedObject::new(1, b, 1.0, Source::Manual).unwrap()]
        };
        d.images.push(ImageRecord {
            id,
            file_name: format!("{id}.png"),
            width: 64,
            height: 64,
            color_mode: ColorMode::Rgb,
            split,
            objects,
        });
    }
    let dets = vec![
        Detection::new(1, 1, b, 0.9).unwrap(),
        Detection::new(2, 1, b, 0.8).unwrap(),
        Detection::new(3, 1, b, 0.5).unwrap(),
    ];
    let gt = dir.join("gt.json");
    let res = dir.join("dets.json");
    save_coco(&d, &gt).unwrap();
    save_results(&dets, &res).unwrap();
    (gt, res)
}

#[test]
fn geometry_calls() {
    let a = CpsBox { x: 0.0, y: 0.0, w: 10.0, h: 10.0 };
    let b = CpsBox { x: 5.0, y: 0.0, w: 10.0, h: 10.0 };
    let mut v = 0.0;
    assert_eq!(unsafe { cps_iou(&a, &b, &mut v) }, CpsStatus::Ok);
    assert!((v - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(unsafe { cps_iou(ptr::null(), &b, &mut v) }, CpsStatus::NullPointer);
    assert!(last_error().contains("null"));
    let bad = CpsBox { w: -1.0, ..a };
    assert_eq!(unsafe { cps_iou(&a, &bad, &mut v) }, CpsStatus::Validation);

    let mut mask = [0u8; 8 * 6];
    for y in 2..5 {
        for x in 1..4 {
            mask[y * 8 + x] = 1;
        }
    }
    let mut out = CpsBox { x: 0.0, y: 0.0, w: 0.0, h: 0.0 };
    assert_eq!(unsafe { cps_mask_tight_bbox(mask.as_ptr(), 8, 6, &mut out) }, CpsStatus::Ok);
    assert_eq!(out, CpsBox { x: 1.0, y: 2.0, w: 3.0, h: 3.0 });
    let mut bg = true;
    assert_eq!(unsafe { cps_mask_is_background(mask.as_ptr(), 8, 6, &mut bg) }, CpsStatus::Ok);
    assert!(!bg);
    let full = [255u8; 8 * 6];
    assert_eq!(unsafe { cps_mask_is_background(full.as_ptr(), 8, 6, &mut bg) }, CpsStatus::Ok);
    assert!(bg);
    let empty = [0u8; 8 * 6];
    assert_eq!(unsafe { cps_mask_tight_bbox(empty.as_ptr(), 8, 6, &mut out) }, CpsStatus::Runtime);
}

#[test]
fn evaluate_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let (gt_path, det_path) = write_fixture(dir.path());
    unsafe {
        let mut gt = ptr::null_mut();
        assert_eq!(cps_dataset_load(cstr(&gt_path).as_ptr(), &mut gt), CpsStatus::Ok);
        assert_eq!(cps_dataset_image_count(gt), 3);
        assert_eq!(cps_dataset_object_count(gt), 2);
        let mut dets = ptr::null_mut();
        assert_eq!(cps_detections_load(cstr(&det_path).as_ptr(), &mut dets), CpsStatus::Ok);
        assert_eq!(cps_detections_count(dets), 3);

        let mut report = ptr::null_mut();
        assert_eq!(cps_evaluate(gt, dets, &mut report), CpsStatus::Ok);
        assert_eq!(cps_eval_report_ap50(report), 1.0);
        assert_eq!(cps_eval_report_fp_n(report), 1.0);
        let json = cps_eval_report_to_json(report);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        cps_string_free(json);
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["union"]["ap50"], 1.0);

        let copy = dir.path().join("copy.json");
        assert_eq!(cps_dataset_save(gt, cstr(&copy).as_ptr()), CpsStatus::Ok);
        assert_eq!(std::fs::read(&copy).unwrap(), std::fs::read(&gt_path).unwrap());

        cps_eval_report_free(report);
        cps_detections_free(dets);
        cps_dataset_free(gt);
        assert!(cps_eval_report_ap50(ptr::null()).is_nan());
        assert_eq!(cps_dataset_image_count(ptr::null()), 0);
    }
}

#[test]
fn load_errors_map_to_status() {
    let dir = tempfile::tempdir().unwrap();
    let mut gt = ptr::null_mut();
    let missing = cstr(&dir.path().join("missing.json"));
    assert_eq!(unsafe { cps_dataset_load(missing.as_ptr(), &mut gt) }, CpsStatus::Io);
    assert!(gt.is_null());
    assert!(last_error().contains("missing.json"));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"images\": [").unwrap();
    assert_eq!(unsafe { cps_dataset_load(cstr(&broken).as_ptr(), &mut gt) }, CpsStatus::Parse);

    let invalid = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { cps_dataset_load(invalid.as_ptr().cast(), &mut gt) },
        CpsStatus::InvalidUtf8
    );
    assert_eq!(unsafe { cps_dataset_load(ptr::null(), &mut gt) }, CpsStatus::NullPointer);

    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"schema_version": 1, "composer": {"prune_visible_min": 2.0}}"#).unwrap();
    let out = cstr(&dir.path().join("out"));
    assert_eq!(unsafe { cps_synth_run(cstr(&config).as_ptr(), out.as_ptr()) }, CpsStatus::Validation);
    assert_eq!(unsafe { cps_synth_run(cstr(&config).as_ptr(), ptr::null()) }, CpsStatus::Validation);
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(cps_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Builds `tests/c/smoke.c` against the generated header and the static
/// library, then runs it on the fixture.
#[test]
fn c_program_links_and_runs() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<this test> -> target/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libcpsynth_ffi.a");
    assert!(lib.is_file(), "static library not built at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let build = Command::new(&cc)
        .args(["-std=c11", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("C compiler available");
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));

    let (gt, dets) = write_fixture(dir.path());
    let run = Command::new(&exe).arg(&gt).arg(&dets).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("images=3 objects=2 ap50=1.000"), "{stdout}");
}
