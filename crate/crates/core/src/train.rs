//! Losses, the Adam optimizer and the three training procedures.
//!
//! Stage 1 fits RGB frames; stage 2 continues from a stage-1 checkpoint on
//! mask frames encoded as grey-level RGB targets. Both go through
//! [`train`] with the same renderer and the same photometric loss; only the
//! dataset (and therefore the composited background) differs. The joint
//! baseline uses a field with a mask head and adds a weighted BCE term.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Stage};
use crate::dataset::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldParams, HeadType};
use crate::fsutil;
use crate::scalar::FlushDenormals;
use crate::render::{pixel_to_ray, render_with_tape, JitterKey, Ray, RenderConfig};

/// Clamp applied to rendered mask probabilities inside the BCE term.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub rays_per_batch: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Weight of the segmentation term in the joint objective.
    pub joint_weight: f64,
    pub rng_seed: u64,
    pub samples_per_ray: usize,
    pub jitter: bool,
    pub log_every: usize,
    /// Sampling bounds; default to the dataset cameras' near/far.
    pub near: Option<f64>,
    pub far: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rays_per_batch: 1024,
            steps: 20_000,
            learning_rate: 5e-4,
            lr_final: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            joint_weight: 1.0,
            rng_seed: 0,
            samples_per_ray: 64,
            jitter: true,
            log_every: 100,
            near: None,
            far: None,
        }
    }
}

impl TrainConfig {
    /// Field-by-field validation messages; empty when valid.
    pub fn problems(&self, section: &str) -> Vec<String> {
        let mut p = Vec::new();
        if self.rays_per_batch == 0 {
            p.push(format!("{section}.rays_per_batch must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            p.push(format!("{section}.learning_rate must be positive"));
        }
        if !(self.lr_final > 0.0 && self.lr_final <= self.learning_rate) {
            p.push(format!("{section}.lr_final must lie in (0, learning_rate]"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            p.push(format!("{section}.beta1/beta2 must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            p.push(format!("{section}.epsilon must be positive"));
        }
        if !(self.joint_weight >= 0.0) {
            p.push(format!("{section}.joint_weight must be non-negative"));
        }
        if self.samples_per_ray < 2 {
            p.push(format!("{section}.samples_per_ray must be at least 2"));
        }
        if self.log_every == 0 {
            p.push(format!("{section}.log_every must be positive"));
        }
        if let (Some(n), Some(f)) = (self.near, self.far) {
            if !(n > 0.0 && n < f) {
                p.push(format!("{section}.near/far must satisfy 0 < near < far"));
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems("train");
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// `lr * (lr_final / lr)^(step / steps)`.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let frac = if self.steps == 0 { 0.0 } else { step as f64 / self.steps as f64 };
        self.learning_rate * (self.lr_final / self.learning_rate).powf(frac)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    /// Mean loss over the steps since the previous record.
    pub loss: f64,
    /// Wall time since the start of training.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub stage: Stage,
    pub records: Vec<LogRecord>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

impl TrainLog {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "loss", "seconds"])?;
        for r in &self.records {
            w.write_record([r.step.to_string(), r.loss.to_string(), format!("{:.3}", r.seconds)])?;
        }
        w.into_inner().map_err(|e| Error::io("train log", e.into_error()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_csv()?)
    }
}

fn check_sizes(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("batch sizes differ: {a} rendered vs {b} targets")));
    }
    if a == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    Ok(())
}

/// Mean over rays of the squared colour error and its per-ray gradient.
pub fn loss_rgb_with_grad(rendered: &[[f64; 3]], target: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
    check_sizes(rendered.len(), target.len())?;
    let inv = 1.0 / rendered.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(rendered.len());
    for (c, t) in rendered.iter().zip(target) {
        let d = [c[0] - t[0], c[1] - t[1], c[2] - t[2]];
        loss += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        grad.push([2.0 * d[0] * inv, 2.0 * d[1] * inv, 2.0 * d[2] * inv]);
    }
    Ok((loss * inv, grad))
}

/// `mean_r |C(r) - C_gt(r)|^2`.
pub fn loss_rgb(rendered: &[[f64; 3]], target: &[[f64; 3]]) -> Result<f64> {
    loss_rgb_with_grad(rendered, target).map(|(l, _)| l)
}

/// Mask fine-tuning loss: the photometric loss against mask pixels
/// replicated across the three channels.
pub fn loss_mask(rendered: &[[f64; 3]], target: &[[f64; 3]]) -> Result<f64> {
    loss_rgb(rendered, target)
}

/// Mean binary cross-entropy with inputs clamped to `[eps, 1 - eps]`, and
/// its gradient per element (zero where the clamp is active).
pub fn bce_with_grad(predicted: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_sizes(predicted.len(), target.len())?;
    let inv = 1.0 / predicted.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(predicted.len());
    for (&p, &y) in predicted.iter().zip(target) {
        let q = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        loss -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
        let clamped = p < BCE_EPS || p > 1.0 - BCE_EPS;
        grad.push(if clamped { 0.0 } else { inv * (q - y) / (q * (1.0 - q)) });
    }
    Ok((loss * inv, grad))
}

/// Joint objective: `loss_rgb + weight * mean BCE(mask, target_mask)`.
pub fn loss_joint_with_grad(
    rendered_rgb: &[[f64; 3]],
    target_rgb: &[[f64; 3]],
    rendered_mask: &[f64],
    target_mask: &[f64],
    weight: f64,
) -> Result<(f64, Vec<[f64; 3]>, Vec<f64>)> {
    let (rgb, d_rgb) = loss_rgb_with_grad(rendered_rgb, target_rgb)?;
    check_sizes(rendered_rgb.len(), rendered_mask.len())?;
    if weight == 0.0 {
        return Ok((rgb, d_rgb, vec![0.0; rendered_mask.len()]));
    }
    let (bce, mut d_mask) = bce_with_grad(rendered_mask, target_mask)?;
    for g in &mut d_mask {
        *g *= weight;
    }
    Ok((rgb + weight * bce, d_rgb, d_mask))
}

pub fn loss_joint(
    rendered_rgb: &[[f64; 3]],
    target_rgb: &[[f64; 3]],
    rendered_mask: &[f64],
    target_mask: &[f64],
    weight: f64,
) -> Result<f64> {
    loss_joint_with_grad(rendered_rgb, target_rgb, rendered_mask, target_mask, weight).map(|r| r.0)
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One bias-corrected Adam update at 1-based `step` with the decayed
/// learning rate. Parameters are untouched when any gradient is not finite.
pub fn adam_step(params: &mut [f32], grads: &[f32], state: &mut AdamState, step: usize, config: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {}/{} moments",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if step == 0 {
        return Err(Error::InvalidArgument("adam steps are 1-based".into()));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { step });
    }
    let (b1, b2) = (config.beta1, config.beta2);
    let lr = config.learning_rate_at(step);
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i] as f64;
        let m = b1 * state.m[i] + (1.0 - b1) * g;
        let v = b2 * state.v[i] + (1.0 - b2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let update = lr * (m / c1) / ((v / c2).sqrt() + config.epsilon);
        params[i] = (params[i] as f64 - update) as f32;
    }
    Ok(())
}

/// Rays per forward/backward chunk within a batch.
const CHUNK_RAYS: usize = 128;

struct PixelPool<'a> {
    frames: Vec<&'a Dataset>,
    width: u32,
    per_frame: usize,
    len: usize,
}

impl<'a> PixelPool<'a> {
    fn new(primary: &'a Dataset, extra: Option<&'a Dataset>) -> Result<Self> {
        let (w, h) = primary.resolution().ok_or(Error::EmptyDataset)?;
        let per_frame = w as usize * h as usize;
        let mut frames = vec![primary];
        frames.extend(extra);
        Ok(Self {
            frames,
            width: w,
            per_frame,
            len: per_frame * primary.len(),
        })
    }

    /// `(frame, pixel)` of a flat sample index.
    fn locate(&self, idx: usize) -> (usize, usize) {
        (idx / self.per_frame, idx % self.per_frame)
    }

    fn ray(&self, frame: usize, pixel: usize, bounds: (f64, f64)) -> Ray {
        let cam = &self.frames[0].frames[frame].camera;
        let px = (pixel % self.width as usize) as u32;
        let py = (pixel / self.width as usize) as u32;
        let mut r = pixel_to_ray(cam, px, py);
        r.near = bounds.0;
        r.far = bounds.1;
        r
    }

    fn target(&self, which: usize, frame: usize, pixel: usize) -> [f64; 3] {
        let c = self.frames[which].frames[frame].image.rgb_at(pixel);
        [c[0] as f64, c[1] as f64, c[2] as f64]
    }
}

/// Sampling bounds shared by every frame, optionally overridden.
pub fn sampling_bounds(dataset: &Dataset, config: &TrainConfig) -> Result<(f64, f64)> {
    let first = dataset.frames.first().ok_or(Error::EmptyDataset)?;
    let (near, far) = (first.camera.near, first.camera.far);
    if config.near.is_none() || config.far.is_none() {
        if let Some(f) = dataset.frames.iter().find(|f| f.camera.near != near || f.camera.far != far) {
            return Err(Error::BoundsMismatch(format!(
                "frames disagree on near/far ({near}, {far}) vs ({}, {})",
                f.camera.near, f.camera.far
            )));
        }
    }
    Ok((config.near.unwrap_or(near), config.far.unwrap_or(far)))
}

fn stage_for(kind: DatasetKind) -> Stage {
    match kind {
        DatasetKind::Rgb => Stage::Stage1Rgb,
        DatasetKind::BinaryMask | DatasetKind::MulticlassMask => Stage::Stage2Mask,
    }
}

fn initial_params(
    field_config: &FieldConfig,
    init: Option<&Checkpoint>,
    bounds: (f64, f64),
    seed: u64,
) -> Result<FieldParams<f32>> {
    match init {
        Some(ck) => {
            if ck.config() != field_config {
                return Err(Error::ArchitectureMismatch(format!(
                    "initial checkpoint has {:?}, training requested {:?}",
                    ck.config(),
                    field_config
                )));
            }
            if ck.near != bounds.0 || ck.far != bounds.1 {
                return Err(Error::BoundsMismatch(format!(
                    "initial checkpoint was fit with near={} far={}, this run samples near={} far={}",
                    ck.near, ck.far, bounds.0, bounds.1
                )));
            }
            Ok(ck.params.clone())
        }
        None => FieldParams::init(*field_config, seed),
    }
}

struct Progress {
    start: Instant,
    interval_loss: f64,
    interval_steps: usize,
    log: TrainLog,
    total: usize,
    every: usize,
}

impl Progress {
    fn new(stage: Stage, total: usize, every: usize) -> Self {
        Self {
            start: Instant::now(),
            interval_loss: 0.0,
            interval_steps: 0,
            log: TrainLog {
                stage,
                records: Vec::new(),
                step_losses: Vec::with_capacity(total),
            },
            total,
            every,
        }
    }

    fn record(&mut self, step: usize, loss: f64) {
        self.log.step_losses.push(loss);
        self.interval_loss += loss;
        self.interval_steps += 1;
        if step % self.every == 0 || step == self.total {
            let seconds = self.start.elapsed().as_secs_f64();
            let mean = self.interval_loss / self.interval_steps as f64;
            let eta = seconds / step as f64 * (self.total - step) as f64;
            log::info!(
                "{} step {step}/{} loss {mean:.6} elapsed {seconds:.1}s eta {eta:.0}s",
                self.log.stage,
                self.total
            );
            self.log.records.push(LogRecord { step, loss: mean, seconds });
            self.interval_loss = 0.0;
            self.interval_steps = 0;
        }
    }
}

fn draw_batch(rng: &mut ChaCha8Rng, pool: &PixelPool<'_>, n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|_| pool.locate(rng.gen_range(0..pool.len))).collect()
}

/// Fits `dataset` with the photometric loss. RGB datasets yield a
/// `stage1_rgb` checkpoint; mask datasets yield `stage2_mask` and are meant
/// to start from a stage-1 `init` of the same architecture and bounds.
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
    field_config: &FieldConfig,
    init: Option<&Checkpoint>,
) -> Result<(Checkpoint, TrainLog)> {
    config.validate()?;
    field_config.validate()?;
    let _ftz = FlushDenormals::new();
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let bounds = sampling_bounds(dataset, config)?;
    let mut params = initial_params(field_config, init, bounds, config.rng_seed)?;
    let stage = stage_for(dataset.kind);
    let pool = PixelPool::new(dataset, None)?;
    let render = RenderConfig {
        samples_per_ray: config.samples_per_ray,
        jitter: config.jitter,
        background: dataset.background,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut adam = AdamState::new(params.len());
    let mut grad = vec![0.0f32; params.len()];
    let mut progress = Progress::new(stage, config.steps, config.log_every);

    for step in 1..=config.steps {
        let batch = draw_batch(&mut rng, &pool, config.rays_per_batch);
        grad.fill(0.0);
        let rays: Vec<Ray> = batch.iter().map(|&(f, p)| pool.ray(f, p, bounds)).collect();
        let targets: Vec<[f64; 3]> = batch.iter().map(|&(f, p)| pool.target(0, f, p)).collect();
        let keys: Vec<JitterKey> = batch
            .iter()
            .map(|&(f, p)| JitterKey {
                seed: config.rng_seed,
                frame: f as u64,
                pixel: p as u64,
                step: step as u64,
            })
            .collect();
        let tapes: Vec<_> = rays
            .chunks(CHUNK_RAYS)
            .zip(keys.chunks(CHUNK_RAYS))
            .map(|(r, k)| render_with_tape(&params, r, &render, Some(k)))
            .collect();
        let colors: Vec<[f64; 3]> = tapes.iter().flat_map(|t| t.colors.iter().copied()).collect();
        let (loss, d_color) = if dataset.kind.is_mask() {
            let (loss, d) = loss_rgb_with_grad(&colors, &targets)?;
            debug_assert_eq!(loss, loss_mask(&colors, &targets)?);
            (loss, d)
        } else {
            loss_rgb_with_grad(&colors, &targets)?
        };
        for (tape, d) in tapes.iter().zip(d_color.chunks(CHUNK_RAYS)) {
            tape.backward(&params, d, None, &mut grad)?;
        }
        adam_step(&mut params.values, &grad, &mut adam, step, config)?;
        progress.record(step, loss);
    }
    Ok((
        Checkpoint {
            stage,
            params,
            near: bounds.0,
            far: bounds.1,
        },
        progress.log,
    ))
}

/// Continues a stage-1 checkpoint on `dataset` with the unchanged architecture.
pub fn finetune(dataset: &Dataset, config: &TrainConfig, init: &Checkpoint) -> Result<(Checkpoint, TrainLog)> {
    train(dataset, config, init.config(), Some(init))
}

/// Joint RGB + mask training of a field with a mask head. `rgb` and `mask`
/// must share cameras frame by frame.
pub fn train_joint(
    rgb: &Dataset,
    mask: &Dataset,
    config: &TrainConfig,
    field_config: &FieldConfig,
) -> Result<(Checkpoint, TrainLog)> {
    config.validate()?;
    field_config.validate()?;
    let _ftz = FlushDenormals::new();
    if field_config.head_type != HeadType::RgbSigmaMask {
        return Err(Error::InvalidArgument("joint training needs head_type rgb_sigma_mask".into()));
    }
    if rgb.kind != DatasetKind::Rgb || mask.kind != DatasetKind::BinaryMask {
        return Err(Error::InvalidArgument("joint training pairs an rgb dataset with a binary_mask dataset".into()));
    }
    if rgb.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if rgb.len() != mask.len() || rgb.frames.iter().zip(&mask.frames).any(|(a, b)| a.camera != b.camera) {
        return Err(Error::InvalidArgument("rgb and mask frames must be paired with identical cameras".into()));
    }
    let bounds = sampling_bounds(rgb, config)?;
    let mut params = FieldParams::<f32>::init(*field_config, config.rng_seed)?;
    let pool = PixelPool::new(rgb, Some(mask))?;
    let render = RenderConfig {
        samples_per_ray: config.samples_per_ray,
        jitter: config.jitter,
        background: rgb.background,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut adam = AdamState::new(params.len());
    let mut grad = vec![0.0f32; params.len()];
    let mut progress = Progress::new(Stage::Joint, config.steps, config.log_every);

    for step in 1..=config.steps {
        let batch = draw_batch(&mut rng, &pool, config.rays_per_batch);
        grad.fill(0.0);
        let rays: Vec<Ray> = batch.iter().map(|&(f, p)| pool.ray(f, p, bounds)).collect();
        let target_rgb: Vec<[f64; 3]> = batch.iter().map(|&(f, p)| pool.target(0, f, p)).collect();
        let target_mask: Vec<f64> = batch.iter().map(|&(f, p)| pool.target(1, f, p)[0]).collect();
        let keys: Vec<JitterKey> = batch
            .iter()
            .map(|&(f, p)| JitterKey {
                seed: config.rng_seed,
                frame: f as u64,
                pixel: p as u64,
                step: step as u64,
            })
            .collect();
        let tapes: Vec<_> = rays
            .chunks(CHUNK_RAYS)
            .zip(keys.chunks(CHUNK_RAYS))
            .map(|(r, k)| render_with_tape(&params, r, &render, Some(k)))
            .collect();
        let colors: Vec<[f64; 3]> = tapes.iter().flat_map(|t| t.colors.iter().copied()).collect();
        let masks: Vec<f64> = tapes
            .iter()
            .flat_map(|t| t.masks.as_ref().expect("mask head").iter().copied())
            .collect();
        let (loss, d_color, d_mask) =
            loss_joint_with_grad(&colors, &target_rgb, &masks, &target_mask, config.joint_weight)?;
        for ((tape, dc), dm) in tapes.iter().zip(d_color.chunks(CHUNK_RAYS)).zip(d_mask.chunks(CHUNK_RAYS)) {
            tape.backward(&params, dc, Some(dm), &mut grad)?;
        }
        adam_step(&mut params.values, &grad, &mut adam, step, config)?;
        progress.record(step, loss);
    }
    Ok((
        Checkpoint {
            stage: Stage::Joint,
            params,
            near: bounds.0,
            far: bounds.1,
        },
        progress.log,
    ))
}

/// Writes a `step,loss` CSV to any writer.
pub fn write_log<W: std::io::Write>(log: &TrainLog, mut w: W) -> Result<()> {
    let bytes = log.to_csv()?;
    w.write_all(&bytes).map_err(|e| Error::io("train log", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_loss_by_hand() {
        let a = [[0.2, 0.4, 0.6], [0.0, 1.0, 0.5]];
        assert_eq!(loss_rgb(&a, &a).unwrap(), 0.0);
        let b: Vec<[f64; 3]> = a.iter().map(|c| [c[0] + 0.1, c[1] + 0.1, c[2] + 0.1]).collect();
        assert!((loss_rgb(&b, &a).unwrap() - 0.03).abs() < 1e-12);
        let (rb, ra) = ([b[1], b[0]], [a[1], a[0]]);
        assert_eq!(loss_rgb(&rb, &ra).unwrap(), loss_rgb(&b, &a).unwrap());
        assert!(loss_rgb(&a[..1], &a).is_err());
    }

    #[test]
    fn mask_loss_by_hand() {
        assert_eq!(loss_mask(&[[1.0; 3]], &[[1.0; 3]]).unwrap(), 0.0);
        assert!((loss_mask(&[[0.5; 3]], &[[1.0; 3]]).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn joint_loss_closed_forms() {
        let rgb = [[0.3, 0.2, 0.1]];
        assert!(loss_joint(&rgb, &rgb, &[1.0], &[1.0], 1.0).unwrap() < 1e-5);
        assert!(loss_joint(&rgb, &rgb, &[0.0], &[0.0], 1.0).unwrap() < 1e-5);
        let l = loss_joint(&rgb, &rgb, &[0.5], &[1.0], 1.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let other = [[0.1, 0.9, 0.4]];
        assert_eq!(
            loss_joint(&rgb, &other, &[0.3], &[1.0], 0.0).unwrap(),
            loss_rgb(&rgb, &other).unwrap()
        );
    }

    #[test]
    fn bce_gradient_matches_finite_difference() {
        let y = [1.0, 0.0, 1.0];
        let p = [0.3, 0.6, 0.9];
        let (_, g) = bce_with_grad(&p, &y).unwrap();
        for i in 0..3 {
            let h = 1e-6;
            let mut hi = p;
            let mut lo = p;
            hi[i] += h;
            lo[i] -= h;
            let fd = (bce_with_grad(&hi, &y).unwrap().0 - bce_with_grad(&lo, &y).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn adam_zero_gradient_from_rest_keeps_params() {
        let cfg = TrainConfig::default();
        let mut p = vec![0.5f32, -1.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 1, &cfg).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
        let mut s = AdamState {
            m: vec![0.2, 0.1],
            v: vec![0.04, 0.01],
        };
        adam_step(&mut p, &[0.0, 0.0], &mut s, 3, &cfg).unwrap();
        assert!((s.m[0] - 0.18).abs() < 1e-12 && (s.v[0] - 0.04 * 0.999).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_by_hand() {
        let cfg = TrainConfig {
            steps: 10,
            ..Default::default()
        };
        let mut p = vec![1.0f32];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 1, &cfg).unwrap();
        let lr1 = 5e-4 * (0.1f64).powf(0.1);
        let want = 1.0 - lr1 / (1.0 + 1e-8);
        assert!((p[0] as f64 - want).abs() < 1e-7);
        let mut q = vec![1.0f32];
        let mut s2 = AdamState::new(1);
        adam_step(&mut q, &[1.0], &mut s2, 1, &cfg).unwrap();
        assert_eq!(p, q);
        assert_eq!(s, s2);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let cfg = TrainConfig::default();
        let mut p = vec![1.0f32];
        let mut s = AdamState::new(1);
        let err = adam_step(&mut p, &[f32::NAN], &mut s, 7, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { step: 7 }));
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn learning_rate_decays_exponentially() {
        let cfg = TrainConfig {
            steps: 100,
            ..Default::default()
        };
        assert!((cfg.learning_rate_at(0) - 5e-4).abs() < 1e-18);
        assert!((cfg.learning_rate_at(100) - 5e-5).abs() < 1e-15);
        assert!((cfg.learning_rate_at(50) - (5e-4f64 * 5e-5).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn invalid_config_lists_fields() {
        let cfg = TrainConfig {
            lr_final: 1.0,
            rays_per_batch: 0,
            ..Default::default()
        };
        let p = cfg.problems("stage1");
        assert!(p.iter().any(|m| m.contains("stage1.lr_final")));
        assert!(p.iter().any(|m| m.contains("stage1.rays_per_batch")));
    }
}
