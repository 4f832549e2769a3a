//! Image metrics, held-out view evaluation, the density-delta analysis and
//! point-cloud scores against ground-truth fruit.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraFrame;
use crate::checkpoint::{Checkpoint, Stage};
use crate::cloud::LabeledPointCloud;
use crate::cluster::CountReport;
use crate::dataset::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::extract::snap_level;
use crate::field::FieldParams;
use crate::fsutil;
use crate::image::Image;
use crate::render::{march_rays, pixel_to_ray, sample_ray, RadianceField, Ray, RenderConfig};
use crate::Vec3;

pub const PSNR_CAP: f64 = 99.0;

fn check_shape(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Shape(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` over all channels; identical images give the cap.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_shape(a, b)?;
    if a.channels != b.channels {
        return Err(Error::Shape(format!("channel counts differ: {} vs {}", a.channels, b.channels)));
    }
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn iou_of(pred: impl Iterator<Item = bool>, gt: impl Iterator<Item = bool>) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (p, g) in pred.zip(gt) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Intersection over union of `pred` (mean channel `>= threshold`) and `gt`
/// (`>= 0.5`); two empty masks score 1.
pub fn iou(pred: &Image, gt: &Image, threshold: f64) -> Result<f64> {
    check_shape(pred, gt)?;
    let n = pred.pixel_count();
    Ok(iou_of(
        (0..n).map(|i| pred.mean_at(i) as f64 >= threshold),
        (0..n).map(|i| gt.mean_at(i) >= 0.5),
    ))
}

/// One-vs-rest IoU of class `class` (1-based) after snapping both images to
/// the nearest of `{0} ∪ levels`.
pub fn iou_class(pred: &Image, gt: &Image, levels: &[f32], class: u32) -> Result<f64> {
    check_shape(pred, gt)?;
    let n = pred.pixel_count();
    Ok(iou_of(
        (0..n).map(|i| snap_level(pred.mean_at(i) as f64, levels) == class),
        (0..n).map(|i| snap_level(gt.mean_at(i) as f64, levels) == class),
    ))
}

fn camera_rays(camera: &CameraFrame, bounds: (f64, f64), row: u32) -> Vec<Ray> {
    (0..camera.width())
        .map(|px| {
            let mut r = pixel_to_ray(camera, px, row);
            r.near = bounds.0;
            r.far = bounds.1;
            r
        })
        .collect()
}

/// Composited colour image of `field` seen from `camera`.
pub fn render_image<F: RadianceField + Sync + ?Sized>(
    field: &F,
    camera: &CameraFrame,
    bounds: (f64, f64),
    config: &RenderConfig,
) -> Image {
    let rows: Vec<Vec<[f64; 3]>> = (0..camera.height())
        .into_par_iter()
        .map(|y| {
            march_rays(field, &camera_rays(camera, bounds, y), config, None)
                .iter()
                .map(|s| s.color(config.background))
                .collect()
        })
        .collect();
    let mut img = Image::new(camera.width(), camera.height(), 3);
    for (v, c) in img.data.chunks_exact_mut(3).zip(rows.iter().flatten()) {
        for k in 0..3 {
            v[k] = c[k] as f32;
        }
    }
    img
}

/// Mask-head image `sum_i w_i m_i` of a joint field.
pub fn render_mask_image<F: RadianceField + Sync + ?Sized>(
    field: &F,
    camera: &CameraFrame,
    bounds: (f64, f64),
    config: &RenderConfig,
) -> Result<Image> {
    if !field.has_mask() {
        return Err(Error::InvalidArgument("mask rendering needs a field with a mask head".into()));
    }
    let rows: Vec<Vec<f64>> = (0..camera.height())
        .into_par_iter()
        .map(|y| {
            march_rays(field, &camera_rays(camera, bounds, y), config, None)
                .iter()
                .map(|s| s.mask_value().expect("mask head"))
                .collect()
        })
        .collect();
    let mut img = Image::new(camera.width(), camera.height(), 1);
    for (v, m) in img.data.iter_mut().zip(rows.iter().flatten()) {
        *v = *m as f32;
    }
    Ok(img)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub view_id: String,
    pub metric: String,
    pub value: f64,
}

impl EvalRow {
    pub fn new(view_id: impl ToString, metric: &str, value: f64) -> Self {
        Self {
            view_id: view_id.to_string(),
            metric: metric.to_string(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewEval {
    pub view: usize,
    pub image: Image,
    pub rows: Vec<EvalRow>,
}

/// Renders the held-out views of `dataset` and scores them. RGB datasets are
/// scored by PSNR of the colour render; mask datasets by IoU of either the
/// binarized colour render (stage 2) or the mask head (joint).
pub fn render_eval_views(
    checkpoint: &Checkpoint,
    dataset: &Dataset,
    held_out: &[usize],
    samples_per_ray: usize,
) -> Result<Vec<ViewEval>> {
    if let Some(&bad) = held_out.iter().find(|&&i| i >= dataset.len()) {
        return Err(Error::InvalidArgument(format!(
            "held-out view {bad} out of range for {} frames",
            dataset.len()
        )));
    }
    match (checkpoint.stage, dataset.kind) {
        (Stage::Stage1Rgb | Stage::Joint, DatasetKind::Rgb)
        | (Stage::Stage2Mask, DatasetKind::BinaryMask | DatasetKind::MulticlassMask)
        | (Stage::Joint, DatasetKind::BinaryMask) => {}
        (stage, kind) => {
            return Err(Error::InvalidArgument(format!(
                "a {stage} checkpoint cannot be evaluated against a {kind:?} dataset"
            )))
        }
    }
    let config = RenderConfig {
        samples_per_ray,
        jitter: false,
        background: dataset.background,
    };
    let bounds = (checkpoint.near, checkpoint.far);
    let field = &checkpoint.params;
    held_out
        .iter()
        .map(|&v| {
            let frame = &dataset.frames[v];
            let mut rows = Vec::new();
            let image = match (checkpoint.stage, dataset.kind) {
                (_, DatasetKind::Rgb) => {
                    let img = render_image(field, &frame.camera, bounds, &config);
                    rows.push(EvalRow::new(v, "psnr", psnr(&img, &frame.image)?));
                    img
                }
                (Stage::Joint, _) => {
                    let img = render_mask_image(field, &frame.camera, bounds, &config)?;
                    rows.push(EvalRow::new(v, "iou", iou(&img, &frame.image, 0.5)?));
                    img
                }
                (_, DatasetKind::BinaryMask) => {
                    let img = render_image(field, &frame.camera, bounds, &config);
                    rows.push(EvalRow::new(v, "iou", iou(&img, &frame.image, 0.5)?));
                    img
                }
                (_, DatasetKind::MulticlassMask) => {
                    let img = render_image(field, &frame.camera, bounds, &config);
                    let mut sum = 0.0;
                    for k in 1..=dataset.class_levels.len() as u32 {
                        let s = iou_class(&img, &frame.image, &dataset.class_levels, k)?;
                        rows.push(EvalRow::new(v, &format!("iou_class_{k}"), s));
                        sum += s;
                    }
                    rows.push(EvalRow::new(v, "iou", sum / dataset.class_levels.len() as f64));
                    img
                }
            };
            Ok(ViewEval { view: v, image, rows })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelCategory {
    Object,
    Background,
}

impl PixelCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            PixelCategory::Object => "object",
            PixelCategory::Background => "background",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityDeltaProfile {
    pub frame: usize,
    pub px: u32,
    pub py: u32,
    pub category: PixelCategory,
    pub t: Vec<f64>,
    pub delta_sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub object_mean: f64,
    pub background_mean: f64,
    pub object_samples: usize,
    pub background_samples: usize,
}

impl DeltaSummary {
    pub fn from_profiles(profiles: &[DensityDeltaProfile]) -> Self {
        let mut acc = [(0.0, 0usize); 2];
        for p in profiles {
            let a = &mut acc[(p.category == PixelCategory::Background) as usize];
            a.0 += p.delta_sigma.iter().sum::<f64>();
            a.1 += p.delta_sigma.len();
        }
        let mean = |(s, n): (f64, usize)| if n == 0 { 0.0 } else { s / n as f64 };
        Self {
            object_mean: mean(acc[0]),
            background_mean: mean(acc[1]),
            object_samples: acc[0].1,
            background_samples: acc[1].1,
        }
    }
}

/// Seeded choice of up to `n` object-pixel and `n` background-pixel rays
/// from the masks. Object pixels are those `>= 0.5`.
pub fn choose_delta_rays(masks: &Dataset, n: usize, seed: u64) -> Vec<(usize, u32, u32, PixelCategory)> {
    let mut pools: [Vec<(usize, u32, u32)>; 2] = [Vec::new(), Vec::new()];
    for (f, frame) in masks.frames.iter().enumerate() {
        let img = &frame.image;
        for py in 0..img.height {
            for px in 0..img.width {
                let object = img.pixel(px, py)[0] >= 0.5;
                pools[(!object) as usize].push((f, px, py));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (pool, cat) in pools.iter().zip([PixelCategory::Object, PixelCategory::Background]) {
        let k = n.min(pool.len());
        for i in sample(&mut rng, pool.len(), k).into_iter() {
            let (f, px, py) = pool[i];
            out.push((f, px, py, cat));
        }
    }
    out
}

/// `sigma_post - sigma_pre` at identical stratified samples along the rays.
pub fn density_delta_params(
    pre: &FieldParams<f32>,
    post: &FieldParams<f32>,
    masks: &Dataset,
    rays: &[(usize, u32, u32, PixelCategory)],
    bounds: (f64, f64),
    samples_per_ray: usize,
) -> Result<Vec<DensityDeltaProfile>> {
    if pre.config != post.config {
        return Err(Error::ArchitectureMismatch(format!(
            "density delta between {:?} and {:?}",
            pre.config, post.config
        )));
    }
    let config = RenderConfig {
        samples_per_ray,
        jitter: false,
        background: [0.0; 3],
    };
    config.validate()?;
    rays.iter()
        .map(|&(frame, px, py, category)| {
            let cam = &masks
                .frames
                .get(frame)
                .ok_or_else(|| Error::InvalidArgument(format!("frame {frame} out of range")))?
                .camera;
            let mut ray = pixel_to_ray(cam, px, py);
            ray.near = bounds.0;
            ray.far = bounds.1;
            let (t, _) = sample_ray(&ray, &config, None);
            let pts: Vec<[f32; 3]> = t
                .iter()
                .map(|&ti| {
                    let p = ray.at(ti);
                    [p.x as f32, p.y as f32, p.z as f32]
                })
                .collect();
            let a = pre.density(&pts);
            let b = post.density(&pts);
            let delta_sigma = a.iter().zip(&b).map(|(&x, &y)| y as f64 - x as f64).collect();
            Ok(DensityDeltaProfile {
                frame,
                px,
                py,
                category,
                t,
                delta_sigma,
            })
        })
        .collect()
}

/// Density change caused by mask fine-tuning, sampled along object and
/// background rays of the ground-truth masks.
pub fn density_delta(
    pre: &Checkpoint,
    post: &Checkpoint,
    masks: &Dataset,
    n_rays_per_category: usize,
    samples_per_ray: usize,
    seed: u64,
) -> Result<(Vec<DensityDeltaProfile>, DeltaSummary)> {
    pre.require_stage(Stage::Stage1Rgb)?;
    post.require_stage(Stage::Stage2Mask)?;
    if pre.config() != post.config() {
        return Err(Error::ArchitectureMismatch(format!(
            "stage-1 {:?} vs stage-2 {:?}",
            pre.config(),
            post.config()
        )));
    }
    if (pre.near, pre.far) != (post.near, post.far) {
        return Err(Error::BoundsMismatch(format!(
            "stage-1 bounds ({}, {}) vs stage-2 ({}, {})",
            pre.near, pre.far, post.near, post.far
        )));
    }
    let rays = choose_delta_rays(masks, n_rays_per_category, seed);
    let profiles = density_delta_params(&pre.params, &post.params, masks, &rays, (pre.near, pre.far), samples_per_ray)?;
    let summary = DeltaSummary::from_profiles(&profiles);
    Ok((profiles, summary))
}

pub fn density_delta_csv(profiles: &[DensityDeltaProfile]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["frame", "px", "py", "category", "sample_index", "t", "delta_sigma"])?;
    for p in profiles {
        for (i, (t, d)) in p.t.iter().zip(&p.delta_sigma).enumerate() {
            w.write_record([
                p.frame.to_string(),
                p.px.to_string(),
                p.py.to_string(),
                p.category.as_str().to_string(),
                i.to_string(),
                t.to_string(),
                d.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::io("density delta", e.into_error()))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub count: Option<CountReport>,
    pub density: Option<DeltaSummary>,
}

impl EvalReport {
    /// All rows, including aggregate ones under view id `all`.
    pub fn all_rows(&self) -> Vec<EvalRow> {
        let mut rows = self.rows.clone();
        let metrics: BTreeSet<&str> = self.rows.iter().map(|r| r.metric.as_str()).collect();
        for m in metrics {
            let v: Vec<f64> = self.rows.iter().filter(|r| r.metric == m).map(|r| r.value).collect();
            rows.push(EvalRow::new("all", &format!("mean_{m}"), v.iter().sum::<f64>() / v.len() as f64));
        }
        if let Some(c) = &self.count {
            rows.push(EvalRow::new("all", "predicted_count", c.predicted_count as f64));
            if let Some(g) = c.ground_truth_count {
                rows.push(EvalRow::new("all", "ground_truth_count", g as f64));
            }
        }
        if let Some(d) = &self.density {
            rows.push(EvalRow::new("all", "delta_sigma_object_mean", d.object_mean));
            rows.push(EvalRow::new("all", "delta_sigma_background_mean", d.background_mean));
        }
        rows
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.metric == metric).map(|r| r.value).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["view_id", "metric", "value"])?;
        for r in self.all_rows() {
            w.write_record([r.view_id, r.metric, r.value.to_string()])?;
        }
        w.into_inner().map_err(|e| Error::io("eval report", e.into_error()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_csv()?)
    }
}

fn ball_meets_box(center: &Vec3, radius: f64, lo: &Vec3, hi: &Vec3) -> bool {
    let mut d2 = 0.0;
    for a in 0..3 {
        let c = center[a].clamp(lo[a], hi[a]);
        d2 += (center[a] - c) * (center[a] - c);
    }
    d2 <= radius * radius
}

/// Fraction of voxels (side `leaf`) occupied by `cloud` that intersect a
/// ground-truth fruit ball; 1 for an empty cloud.
pub fn voxel_precision(cloud: &LabeledPointCloud, fruits: &[(Vec3, f64)], leaf: f64) -> Result<f64> {
    if !(leaf > 0.0) {
        return Err(Error::InvalidArgument(format!("voxel leaf must be positive, got {leaf}")));
    }
    let voxels: BTreeSet<[i64; 3]> = cloud
        .points
        .iter()
        .map(|p| [(p.x / leaf).floor() as i64, (p.y / leaf).floor() as i64, (p.z / leaf).floor() as i64])
        .collect();
    if voxels.is_empty() {
        return Ok(1.0);
    }
    let hits = voxels
        .iter()
        .filter(|k| {
            let lo = Vec3::new(k[0] as f64, k[1] as f64, k[2] as f64) * leaf;
            let hi = lo + Vec3::repeat(leaf);
            fruits.iter().any(|(c, r)| ball_meets_box(c, *r, &lo, &hi))
        })
        .count();
    Ok(hits as f64 / voxels.len() as f64)
}

/// For each ground-truth ball (class `i + 1`), the fraction of cloud points
/// inside it carrying that class label; `None` when no point falls inside.
pub fn label_purity(cloud: &LabeledPointCloud, fruits: &[(Vec3, f64)]) -> Vec<Option<f64>> {
    fruits
        .iter()
        .enumerate()
        .map(|(i, (c, r))| {
            let inside: Vec<u32> = cloud
                .points
                .iter()
                .zip(&cloud.labels)
                .filter(|(p, _)| (*p - c).norm() <= *r)
                .map(|(_, &l)| l)
                .collect();
            (!inside.is_empty())
                .then(|| inside.iter().filter(|&&l| l == i as u32 + 1).count() as f64 / inside.len() as f64)
        })
        .collect()
}
