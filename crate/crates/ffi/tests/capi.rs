use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use liftgan::data::{generate_synthetic, SyntheticConfig};
use liftgan::eval::mpjpe;
use liftgan::gan::{normalize, poses_to_matrix, train, LiftModel, TrainConfig, TrainOptions, TrainState};
use liftgan::geometry::{perspective_project, LiftConfig, SkeletonTopology};
use liftgan_ffi::*;

fn tiny_checkpoint(dir: &Path) -> Vec<f64> {
    let mut cfg = TrainConfig::smoke();
    cfg.steps = 5;
    cfg.width = 16;
    cfg.batch_size = 16;
    let data = SyntheticConfig {
        num_skeletons: 40,
        ..Default::default()
    };
    let splits = generate_synthetic(&data, &cfg.lift).unwrap();
    let (x, norm) = normalize(&splits.train.poses_2d, &SkeletonTopology::standard(), &cfg.lift).unwrap();
    let mut state = TrainState::new(cfg).unwrap();
    let m = poses_to_matrix(&x);
    train(&mut state, m.clone(), m, &TrainOptions::default(), None).unwrap();
    state.save(dir, Some(&norm)).unwrap();
    splits.test.poses_2d.iter().flat_map(|p| p.to_flat()).collect()
}

fn last_error() -> String {
    let p = lg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn lift_through_the_c_interface_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let raw = tiny_checkpoint(dir.path());
    let n = raw.len() / LG_POSE_DIM;
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();

    let mut model = ptr::null_mut();
    assert_eq!(unsafe { lg_model_load(path.as_ptr(), &mut model) }, LgStatus::Ok);
    assert!(!model.is_null());
    assert!(lg_last_error().is_null());

    let mut out = vec![0.0; n * LG_SKELETON_DIM];
    assert_eq!(
        unsafe { lg_model_lift(model, raw.as_ptr(), n, 0, out.as_mut_ptr()) },
        LgStatus::Ok
    );

    let mut lib = LiftModel::load(dir.path()).unwrap();
    let poses: Vec<_> = raw
        .chunks(LG_POSE_DIM)
        .map(|c| liftgan::geometry::Pose2D::from_flat(c).unwrap())
        .collect();
    let expected: Vec<f64> = lib.lift_raw(&poses).unwrap().iter().flat_map(|s| s.to_flat()).collect();
    assert_eq!(out, expected);

    // Re-imaging the lift from the original camera gives back the
    // normalized input.
    let mut reprojected = vec![0.0; n * LG_POSE_DIM];
    assert_eq!(
        unsafe { lg_project(out.as_ptr(), n, reprojected.as_mut_ptr()) },
        LgStatus::Ok
    );
    let normalized = lib
        .norm
        .as_ref()
        .unwrap()
        .apply(&poses, &SkeletonTopology::standard())
        .unwrap();
    for (a, b) in reprojected.iter().zip(normalized.iter().flat_map(|p| p.to_flat())) {
        assert!((a - b).abs() < 1e-12);
    }
    unsafe { lg_model_free(model) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut model = ptr::null_mut();
    let missing = CString::new("/nonexistent/checkpoint").unwrap();
    let status = unsafe { lg_model_load(missing.as_ptr(), &mut model) };
    assert_ne!(status, LgStatus::Ok);
    assert!(model.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { lg_model_load(ptr::null(), &mut model) }, LgStatus::NullPointer);
    assert!(last_error().contains("path"));

    let mut out = [0.0; LG_SKELETON_DIM];
    assert_eq!(
        unsafe { lg_model_lift(ptr::null_mut(), ptr::null(), 1, 0, out.as_mut_ptr()) },
        LgStatus::NullPointer
    );

    let pose = [0.0; LG_POSE_DIM];
    assert_eq!(
        unsafe { lg_flat_baseline(pose.as_ptr(), 1, 0.5, out.as_mut_ptr()) },
        LgStatus::Domain
    );

    let mut mean = 0.0;
    let sk = [0.0; LG_SKELETON_DIM];
    let status = unsafe { lg_mpjpe(sk.as_ptr(), sk.as_ptr(), 1, 900.0, &mut mean, ptr::null_mut()) };
    assert_eq!(status, LgStatus::Degenerate);

    unsafe { lg_model_free(ptr::null_mut()) };
}

#[test]
fn baseline_and_mpjpe_agree_with_the_library() {
    let cfg = LiftConfig::default();
    let splits = generate_synthetic(
        &SyntheticConfig {
            num_skeletons: 20,
            ..Default::default()
        },
        &cfg,
    )
    .unwrap();
    let ds = &splits.train;
    let n = ds.len();
    let flat: Vec<f64> = ds.poses_2d.iter().flat_map(|p| p.to_flat()).collect();
    let mut base = vec![0.0; n * LG_SKELETON_DIM];
    assert_eq!(
        unsafe { lg_flat_baseline(flat.as_ptr(), n, 10.0, base.as_mut_ptr()) },
        LgStatus::Ok
    );
    assert!(base.chunks(3).all(|j| j[2] == 11.0));

    let gt: Vec<f64> = ds.poses_3d.as_ref().unwrap().iter().flat_map(|s| s.to_flat()).collect();
    let (mut mean, mut per) = (0.0, vec![0.0; n]);
    let status = unsafe { lg_mpjpe(base.as_ptr(), gt.as_ptr(), n, 900.0, &mut mean, per.as_mut_ptr()) };
    assert_eq!(status, LgStatus::Ok);
    let pred: Vec<_> = base
        .chunks(LG_SKELETON_DIM)
        .map(|c| liftgan::geometry::Skeleton3D::from_flat(c).unwrap())
        .collect();
    let report = mpjpe(&pred, ds.poses_3d.as_ref().unwrap(), None, 900.0).unwrap();
    assert_eq!(mean, report.overall_mpjpe_mm);
    assert_eq!(per, report.per_sample_mm);

    let mut same = 1.0;
    assert_eq!(
        unsafe { lg_mpjpe(gt.as_ptr(), gt.as_ptr(), n, 900.0, &mut same, ptr::null_mut()) },
        LgStatus::Ok
    );
    assert!(same < 1e-9);

    let mut img = vec![0.0; n * LG_POSE_DIM];
    assert_eq!(unsafe { lg_project(gt.as_ptr(), n, img.as_mut_ptr()) }, LgStatus::Ok);
    let direct = perspective_project(&ds.poses_3d.as_ref().unwrap()[0])
        .unwrap()
        .to_flat();
    assert_eq!(&img[..LG_POSE_DIM], &direct[..]);
}

#[test]
fn empty_batches_are_fine() {
    let mut mean = -1.0;
    let status = unsafe { lg_mpjpe(ptr::null(), ptr::null(), 0, 900.0, &mut mean, ptr::null_mut()) };
    assert_eq!(status, LgStatus::Ok);
    assert_eq!(mean, 0.0);
    assert_eq!(unsafe { lg_project(ptr::null(), 0, ptr::null_mut()) }, LgStatus::Ok);
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/liftgan.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "lg_model_load",
        "lg_model_free",
        "lg_model_lift",
        "lg_project",
        "lg_mpjpe",
        "lg_last_error",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"liftgan.h\"\nint main(void) { LgModel *m = 0; double buf[LG_POSE_DIM];\n\
         (void)buf; return lg_model_load(\"x\", &m) == LG_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler on PATH; skipping the compile check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
