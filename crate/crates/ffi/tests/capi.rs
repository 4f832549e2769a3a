use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use nerfseg::checkpoint::save_checkpoint;
use nerfseg::{Checkpoint, FieldConfig, FieldParams, HeadType, Stage};
use nerfseg_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ns_last_error()) }.to_string_lossy().into_owned()
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn small_checkpoint(head_type: HeadType) -> Checkpoint {
    let config = FieldConfig {
        trunk_width: 8,
        trunk_depth: 2,
        head_type,
        ..FieldConfig::default()
    };
    Checkpoint {
        stage: if head_type == HeadType::RgbSigmaMask { Stage::Joint } else { Stage::Stage1Rgb },
        params: FieldParams::init(config, 7).unwrap(),
        near: 1.5,
        far: 4.0,
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(ns_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_set_and_serialize() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(ns_config_default(&mut cfg), NsStatus::Ok);
        let good = CString::new("cluster.dbscan_min_pts=5").unwrap();
        assert_eq!(ns_config_set(cfg, good.as_ptr()), NsStatus::Ok);
        let bad = CString::new("cluster.no_such_key=1").unwrap();
        assert_eq!(ns_config_set(cfg, bad.as_ptr()), NsStatus::Config);
        assert!(last_error().contains("no_such_key"), "{}", last_error());

        let mut json = ptr::null_mut();
        assert_eq!(ns_config_to_json(cfg, &mut json), NsStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        ns_string_free(json);
        let parsed = nerfseg::config::PipelineConfig::from_json(&text).unwrap();
        assert_eq!(parsed.cluster.dbscan_min_pts, 5);
        ns_config_free(cfg);
    }
}

#[test]
fn null_handles_are_rejected() {
    unsafe {
        assert_eq!(ns_config_default(ptr::null_mut()), NsStatus::NullPointer);
        let mut count = 0usize;
        assert_eq!(ns_count(ptr::null(), ptr::null(), &mut count, ptr::null_mut()), NsStatus::NullPointer);
        assert!(last_error().contains("null"));
        assert_eq!(ns_cloud_len(ptr::null()), 0);
        ns_cloud_free(ptr::null_mut());
        ns_checkpoint_free(ptr::null_mut());
        ns_config_free(ptr::null_mut());
    }
}

#[test]
fn missing_files_report_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(&dir.path().join("absent.ckpt"));
    unsafe {
        let mut ck = ptr::null_mut();
        let status = ns_checkpoint_load(path.as_ptr(), &mut ck);
        assert_ne!(status, NsStatus::Ok);
        assert!(ck.is_null());
        assert!(last_error().contains("absent.ckpt"), "{}", last_error());
    }
}

#[test]
fn checkpoint_query_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.ckpt");
    let ck = small_checkpoint(HeadType::RgbSigma);
    save_checkpoint(&ck, &path).unwrap();
    let points = [0.1, -0.2, 0.3, 0.0, 0.5, -0.5];
    let dirs = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(ns_checkpoint_load(cstr(&path).as_ptr(), &mut h), NsStatus::Ok);

        let (mut stage, mut count, mut has_mask, mut near, mut far) = (NsCheckpointStage::Joint, 0, true, 0.0, 0.0);
        assert_eq!(
            ns_checkpoint_info(h, &mut stage, &mut count, &mut has_mask, &mut near, &mut far),
            NsStatus::Ok
        );
        assert_eq!(stage, NsCheckpointStage::Stage1Rgb);
        assert_eq!(count, ck.params.len());
        assert!(!has_mask);
        assert_eq!((near, far), (1.5, 4.0));

        let mut rgb = [0f32; 6];
        let mut sigma = [0f32; 2];
        let status = ns_checkpoint_query(h, points.as_ptr(), dirs.as_ptr(), 2, rgb.as_mut_ptr(), sigma.as_mut_ptr(), ptr::null_mut());
        assert_eq!(status, NsStatus::Ok);
        for i in 0..2 {
            let want = nerfseg::field::field_forward(
                &ck.params,
                [points[3 * i], points[3 * i + 1], points[3 * i + 2]],
                [dirs[3 * i], dirs[3 * i + 1], dirs[3 * i + 2]],
            )
            .unwrap();
            assert_eq!(sigma[i], want.sigma);
            assert_eq!(&rgb[3 * i..3 * i + 3], &want.color);
        }

        let mut mask = [0f32; 2];
        let status = ns_checkpoint_query(h, points.as_ptr(), dirs.as_ptr(), 2, rgb.as_mut_ptr(), sigma.as_mut_ptr(), mask.as_mut_ptr());
        assert_eq!(status, NsStatus::Mismatch);

        let skew = [0.0, 0.0, 2.0, 1.0, 0.0, 0.0];
        let status = ns_checkpoint_query(h, points.as_ptr(), skew.as_ptr(), 2, rgb.as_mut_ptr(), sigma.as_mut_ptr(), ptr::null_mut());
        assert_eq!(status, NsStatus::InvalidArgument);
        ns_checkpoint_free(h);
    }
}

#[test]
fn joint_checkpoint_exposes_the_mask_head() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("joint.ckpt");
    save_checkpoint(&small_checkpoint(HeadType::RgbSigmaMask), &path).unwrap();
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(ns_checkpoint_load(cstr(&path).as_ptr(), &mut h), NsStatus::Ok);
        let points = [0.0; 3];
        let dirs = [0.0, 1.0, 0.0];
        let (mut rgb, mut sigma, mut mask) = ([0f32; 3], [0f32; 1], [-1f32; 1]);
        let status = ns_checkpoint_query(h, points.as_ptr(), dirs.as_ptr(), 1, rgb.as_mut_ptr(), sigma.as_mut_ptr(), mask.as_mut_ptr());
        assert_eq!(status, NsStatus::Ok);
        assert!((0.0..=1.0).contains(&mask[0]));
        ns_checkpoint_free(h);
    }
}

#[test]
fn render_matches_the_library_renderer() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.ckpt");
    let ck = small_checkpoint(HeadType::RgbSigma);
    save_checkpoint(&ck, &path).unwrap();
    let origins = [0.0, 0.0, 3.0];
    let dirs = [0.0, 0.0, -2.0];
    let bg = [0.5; 3];
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(ns_checkpoint_load(cstr(&path).as_ptr(), &mut h), NsStatus::Ok);
        let mut out = [0.0; 3];
        assert_eq!(
            ns_checkpoint_render(h, origins.as_ptr(), dirs.as_ptr(), 1, 32, bg.as_ptr(), out.as_mut_ptr()),
            NsStatus::Ok
        );
        let ray = nerfseg::Ray {
            origin: nerfseg::Vec3::new(0.0, 0.0, 3.0),
            dir: nerfseg::Vec3::new(0.0, 0.0, -1.0),
            near: 1.5,
            far: 4.0,
        };
        let cfg = nerfseg::RenderConfig {
            samples_per_ray: 32,
            jitter: false,
            background: bg,
        };
        assert_eq!(out, nerfseg::render::render_color(&ck.params, &ray, &cfg));

        let status = ns_checkpoint_render(h, origins.as_ptr(), dirs.as_ptr(), 1, 0, bg.as_ptr(), out.as_mut_ptr());
        assert_ne!(status, NsStatus::Ok);
        ns_checkpoint_free(h);
    }
}

fn blob(center: [f64; 3], n: usize, spacing: f64) -> Vec<f64> {
    let side = (n as f64).cbrt().ceil() as usize;
    let mut xyz = Vec::new();
    'outer: for i in 0..side {
        for j in 0..side {
            for k in 0..side {
                if xyz.len() / 3 == n {
                    break 'outer;
                }
                xyz.extend([
                    center[0] + i as f64 * spacing,
                    center[1] + j as f64 * spacing,
                    center[2] + k as f64 * spacing,
                ]);
            }
        }
    }
    xyz
}

#[test]
fn cloud_round_trip_and_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut xyz = blob([-0.6, 0.0, 0.0], 343, 0.02);
    xyz.extend(blob([0.6, 0.0, 0.0], 343, 0.02));
    let n = xyz.len() / 3;
    let ply = cstr(&dir.path().join("cloud.ply"));
    unsafe {
        let mut cloud = ptr::null_mut();
        assert_eq!(ns_cloud_from_points(xyz.as_ptr(), n, &mut cloud), NsStatus::Ok);
        assert_eq!(ns_cloud_len(cloud), n);
        assert_eq!(ns_cloud_save_ply(cloud, ply.as_ptr()), NsStatus::Ok);

        let mut back = ptr::null_mut();
        assert_eq!(ns_cloud_load_ply(ply.as_ptr(), &mut back), NsStatus::Ok);
        let mut copy = vec![0.0; 3 * n];
        let mut labels = vec![9u32; n];
        assert_eq!(ns_cloud_copy(back, n, copy.as_mut_ptr(), labels.as_mut_ptr(), ptr::null_mut()), NsStatus::Ok);
        assert_eq!(copy, xyz);
        assert!(labels.iter().all(|&l| l == 0));
        assert_eq!(ns_cloud_copy(back, n - 1, copy.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()), NsStatus::InvalidArgument);

        let mut cfg = ptr::null_mut();
        assert_eq!(ns_config_default(&mut cfg), NsStatus::Ok);
        let (mut count, mut clustered) = (0usize, ptr::null_mut());
        assert_eq!(ns_count(back, cfg, &mut count, &mut clustered), NsStatus::Ok);
        assert_eq!(count, 2);
        let m = ns_cloud_len(clustered);
        let mut ids = vec![0i64; m];
        assert_eq!(ns_cloud_copy(clustered, m, ptr::null_mut(), ptr::null_mut(), ids.as_mut_ptr()), NsStatus::Ok);
        let mut distinct: Vec<_> = ids.iter().copied().filter(|&i| i >= 0).collect();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct.len(), 2);

        ns_cloud_free(clustered);
        ns_cloud_free(back);
        ns_cloud_free(cloud);
        ns_config_free(cfg);
    }
}

#[test]
fn non_finite_points_are_rejected() {
    let xyz = [0.0, f64::NAN, 0.0];
    unsafe {
        let mut cloud = ptr::null_mut();
        assert_eq!(ns_cloud_from_points(xyz.as_ptr(), 1, &mut cloud), NsStatus::NonFinite);
        assert!(cloud.is_null());
    }
}

#[test]
fn stage_runner_reports_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = cstr(dir.path());
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(ns_config_default(&mut cfg), NsStatus::Ok);
        let status = ns_run_stage(cfg, out.as_ptr(), NsStage::Cluster);
        assert_eq!(status, NsStatus::Missing);
        assert!(last_error().contains("point cloud"), "{}", last_error());
        ns_config_free(cfg);
    }
}

#[test]
fn stage_runner_synthesizes_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out = cstr(dir.path());
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(ns_config_default(&mut cfg), NsStatus::Ok);
        for set in ["cameras.n_views=6", "cameras.width=16", "cameras.height=16", "eval.held_out=[1]"] {
            let s = CString::new(set).unwrap();
            assert_eq!(ns_config_set(cfg, s.as_ptr()), NsStatus::Ok, "{set}: {}", last_error());
        }
        assert_eq!(ns_run_stage(cfg, out.as_ptr(), NsStage::Synth), NsStatus::Ok, "{}", last_error());
        ns_config_free(cfg);
    }
    assert!(dir.path().join("scene.json").exists());
    assert!(dir.path().join("data/rgb").is_dir());
    assert!(dir.path().join("data/mask").is_dir());
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/nerfseg.h")).unwrap();
    for name in [
        "ns_last_error",
        "ns_version",
        "ns_config_default",
        "ns_config_set",
        "ns_run_stage",
        "ns_checkpoint_load",
        "ns_checkpoint_query",
        "ns_checkpoint_render",
        "ns_cloud_load_ply",
        "ns_cloud_copy",
        "ns_count",
        "typedef struct NsCheckpoint NsCheckpoint",
        "NS_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"nerfseg.h\"\nint main(void) { NsConfig *c = 0; return ns_config_default(&c) == NS_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = std::process::Command::new(cc)
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
