//! Save/load round-trip properties shared by the unit-style suite and the
//! acceptance harness.

use nerfseg::camera::{look_at, Intrinsics};
use nerfseg::checkpoint::{load_checkpoint, save_checkpoint};
use nerfseg::cloud::{LabeledPointCloud, SourceTag};
use nerfseg::dataset::{load_dataset, save_dataset, Frame};
use nerfseg::ply::{read_ply, write_ply};
use nerfseg::{CameraFrame, Checkpoint, Dataset, DatasetKind, FieldConfig, FieldParams, HeadType, Image, Stage, Vec3};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};

pub fn camera(eye: [f64; 3], w: u32, h: u32, near: f64, far: f64) -> CameraFrame {
    let k = Intrinsics::from_fov(w, h, 50.0);
    let pose = look_at(Vec3::from(eye), Vec3::new(0.01, -0.02, 0.03), Vec3::new(0.0, 1.0, 0.0)).unwrap();
    CameraFrame::new(pose, k, near, far).unwrap()
}

pub fn small_params(width: usize, head_type: HeadType, seed: u64) -> FieldParams<f32> {
    FieldParams::init(
        FieldConfig {
            trunk_width: width,
            trunk_depth: 2,
            head_type,
            ..FieldConfig::default()
        },
        seed,
    )
    .unwrap()
}

#[derive(Debug, Clone)]
pub struct DatasetCase {
    views: usize,
    w: u32,
    h: u32,
    kind: u8,
    seed: u64,
    eye: [f64; 3],
    near: f64,
    span: f64,
}

pub fn dataset_case() -> impl Strategy<Value = DatasetCase> {
    (
        1usize..4,
        1u32..6,
        1u32..6,
        0u8..3,
        any::<u64>(),
        prop::array::uniform3(-3.0f64..3.0),
        0.05f64..1.0,
        0.1f64..5.0,
    )
        .prop_filter("eye away from the target", |c| Vec3::from(c.5).norm() > 0.5)
        .prop_map(|(views, w, h, kind, seed, eye, near, span)| DatasetCase {
            views,
            w,
            h,
            kind,
            seed,
            eye,
            near,
            span,
        })
}

/// A random dataset of the case's kind survives save and load unchanged.
pub fn dataset_round_trip(c: DatasetCase) -> Result<(), TestCaseError> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(c.seed);
    let (kind, levels, bytes_to_value): (_, Vec<f32>, fn(u8) -> f32) = match c.kind {
        0 => (DatasetKind::Rgb, vec![], |b| b as f32 / 255.0),
        1 => (DatasetKind::BinaryMask, vec![], |b| if b > 127 { 1.0 } else { 0.0 }),
        _ => (DatasetKind::MulticlassMask, vec![0.25, 0.5, 1.0], |b| [0.0, 0.25, 0.5, 1.0][b as usize % 4]),
    };
    let frames = (0..c.views)
        .map(|v| {
            let mut image = Image::new(c.w, c.h, kind.channels());
            for x in &mut image.data {
                *x = bytes_to_value(rng.gen());
            }
            let eye = [c.eye[0] + v as f64 * 0.1, c.eye[1], c.eye[2]];
            Frame {
                camera: camera(eye, c.w, c.h, c.near, c.near + c.span),
                image,
            }
        })
        .collect();
    let ds = Dataset::new(kind, frames, levels, [rng.gen(), rng.gen(), rng.gen()]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let back = load_dataset(dir.path()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(back, ds);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CheckpointCase {
    stage: u8,
    mask: bool,
    width: usize,
    seed: u64,
    near: f64,
    span: f64,
    scale: f32,
}

pub fn checkpoint_case() -> impl Strategy<Value = CheckpointCase> {
    (0u8..3, any::<bool>(), 1usize..12, any::<u64>(), 0.01f64..2.0, 0.01f64..10.0, -1e30f32..1e30).prop_map(
        |(stage, mask, width, seed, near, span, scale)| CheckpointCase {
            stage,
            mask,
            width,
            seed,
            near,
            span,
            scale,
        },
    )
}

/// Parameters, stage tag, bounds and architecture come back bit for bit.
pub fn checkpoint_round_trip(c: CheckpointCase) -> Result<(), TestCaseError> {
    let head = if c.mask { HeadType::RgbSigmaMask } else { HeadType::RgbSigma };
    let mut params = small_params(c.width, head, c.seed);
    params.values[0] = c.scale;
    params.values[1] = f32::MIN_POSITIVE / 4.0;
    let stage = [Stage::Stage1Rgb, Stage::Stage2Mask, Stage::Joint][c.stage as usize % 3];
    let ck = Checkpoint {
        stage,
        params,
        near: c.near,
        far: c.near + c.span,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ckpt");
    save_checkpoint(&ck, &path).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let back = load_checkpoint(&path, None).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let bits = |p: &FieldParams<f32>| p.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    prop_assert_eq!(bits(&back.params), bits(&ck.params));
    prop_assert_eq!(back.stage, ck.stage);
    prop_assert_eq!(back.near.to_bits(), ck.near.to_bits());
    prop_assert_eq!(back.far.to_bits(), ck.far.to_bits());
    prop_assert_eq!(back.params.config, ck.params.config);
    Ok(())
}

pub type CloudCase = (Vec<([f64; 3], u32, i64)>, u8);

pub fn cloud_case() -> impl Strategy<Value = CloudCase> {
    (
        prop::collection::vec((prop::array::uniform3(-1e6f64..1e6), 0u32..5, -1i64..9), 0..1000),
        0u8..3,
    )
}

/// Coordinates come back bit for bit, with matching header count and body.
pub fn cloud_round_trip((pts, source): CloudCase) -> Result<(), TestCaseError> {
    let source = [SourceTag::Invnerf, SourceTag::Sa3d, SourceTag::SyntheticGt][source as usize % 3];
    let mut cloud = LabeledPointCloud::new(source);
    for (p, l, c) in &pts {
        cloud.push(Vec3::from(*p), *l, *c);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ply");
    write_ply(&cloud, &path).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let text = std::fs::read_to_string(&path).unwrap();
    let header_count: usize = text
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .unwrap()
        .parse()
        .unwrap();
    let body_lines = text.split("end_header\n").nth(1).unwrap().lines().count();
    prop_assert_eq!(header_count, pts.len());
    prop_assert_eq!(body_lines, pts.len());
    let back = read_ply(&path).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for (a, b) in back.points.iter().zip(&cloud.points) {
        for k in 0..3 {
            prop_assert_eq!(a[k].to_bits(), b[k].to_bits());
        }
    }
    prop_assert_eq!(back, cloud);
    Ok(())
}
