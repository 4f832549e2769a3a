//! The pipeline stages behind the command-line subcommands. Every stage
//! reads and writes fixed paths under one output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::cloud::LabeledPointCloud;
use crate::cluster::{count_cloud, CountReport};
use crate::config::{MaskKind, PipelineConfig};
use crate::dataset::{load_dataset, save_dataset, Dataset};
use crate::error::{Error, Result};
use crate::eval::{density_delta, density_delta_csv, label_purity, render_eval_views, voxel_precision, DeltaSummary, EvalReport, EvalRow};
use crate::extract::{apply_labels, canonical_direction, classify_multiclass, extract_grid, sa3d_backproject, ExtractConfig};
use crate::fsutil::write_atomic;
use crate::ply::{read_ply, write_ply};
use crate::scene::Scene;
use crate::synth::{synthesize, SynthOutput};
use crate::train::{finetune, train, train_joint, TrainLog};
use crate::Vec3;

/// Paths of every artifact under an output directory.
#[derive(Debug, Clone)]
pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn at(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn scene(&self) -> PathBuf {
        self.at("scene.json")
    }
    pub fn rgb(&self) -> PathBuf {
        self.at("data/rgb")
    }
    pub fn mask(&self) -> PathBuf {
        self.at("data/mask")
    }
    pub fn multiclass(&self) -> PathBuf {
        self.at("data/multiclass")
    }
    pub fn stage1(&self) -> PathBuf {
        self.at("stage1/checkpoint.ckpt")
    }
    pub fn stage1_log(&self) -> PathBuf {
        self.at("stage1/train_log.csv")
    }
    pub fn stage2(&self) -> PathBuf {
        self.at("stage2/checkpoint.ckpt")
    }
    pub fn stage2_log(&self) -> PathBuf {
        self.at("stage2/train_log.csv")
    }
    pub fn joint(&self) -> PathBuf {
        self.at("joint/checkpoint.ckpt")
    }
    pub fn joint_log(&self) -> PathBuf {
        self.at("joint/train_log.csv")
    }
    pub fn invnerf_cloud(&self) -> PathBuf {
        self.at("clouds/invnerf.ply")
    }
    pub fn sa3d_cloud(&self) -> PathBuf {
        self.at("clouds/sa3d.ply")
    }
    pub fn clustered_cloud(&self) -> PathBuf {
        self.at("clusters/invnerf_clusters.ply")
    }
    pub fn count_report(&self) -> PathBuf {
        self.at("count_report.csv")
    }
    pub fn count_summary(&self) -> PathBuf {
        self.at("clusters/count_summary.csv")
    }
    pub fn count_json(&self) -> PathBuf {
        self.at("clusters/count_report.json")
    }
    pub fn density_delta(&self) -> PathBuf {
        self.at("density_delta.csv")
    }
    pub fn density_summary(&self) -> PathBuf {
        self.at("density_summary.json")
    }
    pub fn eval_report(&self) -> PathBuf {
        self.at("eval_report.csv")
    }
    pub fn eval_views(&self) -> PathBuf {
        self.at("eval")
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    if !path.exists() {
        return Err(Error::Missing {
            what: what.into(),
            path: path.to_path_buf(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn training_split(config: &PipelineConfig, ds: &Dataset) -> Dataset {
    ds.without(&config.eval.held_out)
}

fn mask_dir(config: &PipelineConfig, out: &OutputDir) -> PathBuf {
    match config.mask_kind {
        MaskKind::Binary => out.mask(),
        MaskKind::Multiclass => out.multiclass(),
    }
}

/// Generates the scene and renders all three datasets.
pub fn run_synth(config: &PipelineConfig, out: &OutputDir) -> Result<SynthOutput> {
    config.validate()?;
    let synth = synthesize(&config.scene, &config.cameras)?;
    save_dataset(&synth.rgb, &out.rgb())?;
    save_dataset(&synth.mask, &out.mask())?;
    save_dataset(&synth.multiclass, &out.multiclass())?;
    write_json(&synth.scene, &out.scene())?;
    log::info!(
        "synthesized {} fruits in {} views at {}x{}",
        synth.scene.fruit_count(),
        synth.rgb.len(),
        config.cameras.width,
        config.cameras.height
    );
    Ok(synth)
}

/// Stage 1: RGB fitting on the training views.
pub fn run_train(config: &PipelineConfig, out: &OutputDir) -> Result<(Checkpoint, TrainLog)> {
    config.validate()?;
    let rgb = training_split(config, &load_dataset(&out.rgb())?);
    let (ck, log) = train(&rgb, &config.stage1, &config.field, None)?;
    save_checkpoint(&ck, &out.stage1())?;
    log.write_csv(&out.stage1_log())?;
    Ok((ck, log))
}

/// Stage 2: mask fine-tuning of the stage-1 checkpoint.
pub fn run_finetune(config: &PipelineConfig, out: &OutputDir) -> Result<(Checkpoint, TrainLog)> {
    config.validate()?;
    let init = load_checkpoint(&out.stage1(), Some(&config.field))?;
    let masks = training_split(config, &load_dataset(&mask_dir(config, out))?);
    let (ck, log) = finetune(&masks, &config.stage2, &init)?;
    save_checkpoint(&ck, &out.stage2())?;
    log.write_csv(&out.stage2_log())?;
    Ok((ck, log))
}

/// The joint RGB + mask-head baseline, trained in one pass.
pub fn run_joint(config: &PipelineConfig, out: &OutputDir) -> Result<(Checkpoint, TrainLog)> {
    config.validate()?;
    let rgb = training_split(config, &load_dataset(&out.rgb())?);
    let masks = training_split(config, &load_dataset(&out.mask())?);
    let (ck, log) = train_joint(&rgb, &masks, &config.joint, &config.joint_field())?;
    save_checkpoint(&ck, &out.joint())?;
    log.write_csv(&out.joint_log())?;
    Ok((ck, log))
}

/// Density-threshold back-projection of the training masks through the
/// stage-1 field.
pub fn run_sa3d(config: &PipelineConfig, out: &OutputDir) -> Result<LabeledPointCloud> {
    config.validate()?;
    let ck = load_checkpoint(&out.stage1(), Some(&config.field))?;
    let masks = training_split(config, &load_dataset(&out.mask())?);
    let cloud = sa3d_backproject(&ck, &masks, &config.extract)?;
    write_ply(&cloud, &out.sa3d_cloud())?;
    log::info!("sa3d cloud has {} points", cloud.len());
    Ok(cloud)
}

/// Extraction settings with the canonical direction taken from the
/// training cameras and, for multi-class masks, a colour threshold below
/// the lowest level.
pub fn resolved_extract(config: &PipelineConfig, rgb: &Dataset, levels: Option<&[f32]>) -> Result<ExtractConfig> {
    let mut ec = config.extract.clone();
    if ec.canonical_direction.is_none() {
        let center = (Vec3::from(ec.bounds_min) + Vec3::from(ec.bounds_max)) / 2.0;
        ec.canonical_direction = Some(canonical_direction(rgb, center)?);
    }
    if let Some(&lowest) = levels.and_then(|l| l.first()) {
        ec.color_threshold = ec.color_threshold.min(lowest as f64 / 2.0);
    }
    Ok(ec)
}

/// Grid extraction from the stage-2 field; multi-class runs also label
/// every point by its snapped colour.
pub fn run_extract(config: &PipelineConfig, out: &OutputDir) -> Result<LabeledPointCloud> {
    config.validate()?;
    let ck = load_checkpoint(&out.stage2(), Some(&config.field))?;
    let rgb = training_split(config, &load_dataset(&out.rgb())?);
    let cloud = match config.mask_kind {
        MaskKind::Binary => extract_grid(&ck, &resolved_extract(config, &rgb, None)?)?,
        MaskKind::Multiclass => {
            let levels = load_dataset(&out.multiclass())?.class_levels;
            let ec = resolved_extract(config, &rgb, Some(&levels))?;
            let raw = extract_grid(&ck, &ec)?;
            let labels = classify_multiclass(&ck, &raw.points, &levels, ec.direction())?;
            apply_labels(&raw, &labels)?
        }
    };
    write_ply(&cloud, &out.invnerf_cloud())?;
    log::info!("extracted {} points", cloud.len());
    Ok(cloud)
}

/// Counts the extracted cloud.
pub fn run_cluster(config: &PipelineConfig, out: &OutputDir) -> Result<(LabeledPointCloud, CountReport)> {
    config.validate()?;
    let path = out.invnerf_cloud();
    if !path.exists() {
        return Err(Error::Missing {
            what: "point cloud".into(),
            path,
        });
    }
    let cloud = read_ply(&path)?;
    let (clustered, mut report) = count_cloud(&cloud, &config.cluster)?;
    if out.scene().exists() {
        let scene: Scene = read_json(&out.scene(), "scene")?;
        report.ground_truth_count = Some(scene.fruit_count());
    }
    write_ply(&clustered, &out.clustered_cloud())?;
    write_atomic(&out.count_report(), &report.to_csv()?)?;
    write_atomic(&out.count_summary(), &report.summary_csv()?)?;
    write_json(&report, &out.count_json())?;
    log::info!(
        "counted {} clusters (ground truth {:?})",
        report.predicted_count,
        report.ground_truth_count
    );
    Ok((clustered, report))
}

/// Density change between the stage-1 and stage-2 fields along object and
/// background rays of the training masks.
pub fn run_density_diff(config: &PipelineConfig, out: &OutputDir) -> Result<DeltaSummary> {
    config.validate()?;
    let pre = load_checkpoint(&out.stage1(), Some(&config.field))?;
    let post = load_checkpoint(&out.stage2(), Some(&config.field))?;
    let masks = training_split(config, &load_dataset(&out.mask())?);
    let e = &config.eval;
    let (profiles, summary) = density_delta(
        &pre,
        &post,
        &masks,
        e.density_rays_per_category,
        e.density_samples_per_ray,
        e.seed,
    )?;
    write_atomic(&out.density_delta(), &density_delta_csv(&profiles)?)?;
    write_json(&summary, &out.density_summary())?;
    Ok(summary)
}

fn prefixed(stage: &str, rows: Vec<EvalRow>) -> Vec<EvalRow> {
    rows.into_iter()
        .map(|r| EvalRow {
            metric: format!("{stage}_{}", r.metric),
            ..r
        })
        .collect()
}

fn eval_checkpoint(
    config: &PipelineConfig,
    out: &OutputDir,
    name: &str,
    ck: &Checkpoint,
    dataset: &Dataset,
) -> Result<Vec<EvalRow>> {
    let views = render_eval_views(ck, dataset, &config.eval.held_out, config.render.samples_per_ray)?;
    let mut rows = Vec::new();
    for v in views {
        let kind = if dataset.kind.is_mask() { "mask" } else { "rgb" };
        v.image
            .write_pnm(&out.eval_views().join(format!("{name}_{kind}_view{:03}.pnm", v.view)))?;
        rows.extend(prefixed(name, v.rows));
    }
    Ok(rows)
}

/// Scores every available artifact. The stage-1 checkpoint is required;
/// stage-2, joint, clouds, counts and density summaries are included when
/// present.
pub fn run_eval(config: &PipelineConfig, out: &OutputDir) -> Result<EvalReport> {
    config.validate()?;
    let stage1 = load_checkpoint(&out.stage1(), Some(&config.field))?;
    let rgb = load_dataset(&out.rgb())?;
    let mut report = EvalReport::default();
    report.rows.extend(eval_checkpoint(config, out, "stage1", &stage1, &rgb)?);
    if out.stage2().exists() {
        let ck = load_checkpoint(&out.stage2(), Some(&config.field))?;
        let masks = load_dataset(&mask_dir(config, out))?;
        report.rows.extend(eval_checkpoint(config, out, "stage2", &ck, &masks)?);
    }
    if out.joint().exists() {
        let ck = load_checkpoint(&out.joint(), Some(&config.joint_field()))?;
        let masks = load_dataset(&out.mask())?;
        report.rows.extend(eval_checkpoint(config, out, "joint", &ck, &rgb)?);
        report.rows.extend(eval_checkpoint(config, out, "joint", &ck, &masks)?);
    }
    if out.scene().exists() {
        let scene: Scene = read_json(&out.scene(), "scene")?;
        for (name, path) in [("invnerf", out.invnerf_cloud()), ("sa3d", out.sa3d_cloud())] {
            if path.exists() {
                let cloud = read_ply(&path)?;
                let p = voxel_precision(&cloud, &scene.fruits(), config.eval.precision_leaf)?;
                report.rows.push(EvalRow::new("cloud", &format!("precision_{name}"), p));
                if name == "invnerf" && config.mask_kind == MaskKind::Multiclass {
                    for (i, purity) in label_purity(&cloud, &scene.fruits()).into_iter().enumerate() {
                        let value = purity.unwrap_or(0.0);
                        report.rows.push(EvalRow::new("cloud", &format!("purity_class_{}", i + 1), value));
                    }
                }
            }
        }
    }
    if out.count_json().exists() {
        report.count = Some(read_json(&out.count_json(), "count report")?);
    }
    if out.density_summary().exists() {
        report.density = Some(read_json(&out.density_summary(), "density summary")?);
    }
    report.write_csv(&out.eval_report())?;
    Ok(report)
}
