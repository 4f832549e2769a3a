//! The pipeline configuration file: one JSON document with a section per
//! stage, every field optional, plus `section.key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cluster::ClusterConfig;
use crate::error::{Error, Result};
use crate::extract::ExtractConfig;
use crate::field::{FieldConfig, HeadType};
use crate::scene::OrchardSpec;
use crate::synth::CameraRig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Binary,
    Multiclass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSection {
    /// Samples per ray for evaluation renders.
    pub samples_per_ray: usize,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self { samples_per_ray: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub held_out: Vec<usize>,
    pub density_rays_per_category: usize,
    pub density_samples_per_ray: usize,
    pub seed: u64,
    /// Voxel side for the point-cloud precision score.
    pub precision_leaf: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            held_out: vec![5, 16, 27, 38],
            density_rays_per_category: 256,
            density_samples_per_ray: 64,
            seed: 3,
            precision_leaf: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Which mask dataset stage 2 fine-tunes on.
    pub mask_kind: MaskKind,
    pub scene: OrchardSpec,
    pub cameras: CameraRig,
    pub field: FieldConfig,
    pub render: RenderSection,
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    pub joint: TrainConfig,
    pub extract: ExtractConfig,
    pub cluster: ClusterConfig,
    pub eval: EvalSection,
}

/// Single-core desk-scale budget; the learning rate decays tenfold.
fn desk_budget(steps: usize, learning_rate: f64, rng_seed: u64) -> TrainConfig {
    TrainConfig {
        rays_per_batch: 512,
        steps,
        learning_rate,
        lr_final: learning_rate / 10.0,
        rng_seed,
        log_every: 100,
        ..TrainConfig::default()
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mask_kind: MaskKind::Binary,
            scene: OrchardSpec::default(),
            cameras: CameraRig::default(),
            field: FieldConfig::default(),
            render: RenderSection::default(),
            stage1: desk_budget(1500, 4e-3, 0),
            stage2: desk_budget(500, 1e-3, 1),
            joint: desk_budget(1500, 4e-3, 2),
            extract: ExtractConfig::default(),
            cluster: ClusterConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("config: {e}")]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `section.key=value` (nested keys allowed). The value is read
    /// as JSON, falling back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(vec![format!("override `{assignment}` is not KEY=VALUE")]))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self)?;
        let mut node = &mut doc;
        for part in key.split('.') {
            node = node
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| Error::Config(vec![format!("unknown config key `{key}`")]))?;
        }
        *node = value;
        *self = serde_json::from_value(doc).map_err(|e| Error::Config(vec![format!("{key}: {e}")]))?;
        Ok(())
    }

    /// Sets every RNG seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.scene.rng_seed = seed;
        self.stage1.rng_seed = seed;
        self.stage2.rng_seed = seed;
        self.joint.rng_seed = seed;
        self.eval.seed = seed;
    }

    pub fn stage_bounds(&self, stage: &TrainConfig) -> (f64, f64) {
        (
            stage.near.unwrap_or(self.cameras.near),
            stage.far.unwrap_or(self.cameras.far),
        )
    }

    /// Architecture of the joint baseline: the shared field plus a mask head.
    pub fn joint_field(&self) -> FieldConfig {
        FieldConfig {
            head_type: HeadType::RgbSigmaMask,
            ..self.field
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let s = &self.scene;
        if s.fruit_count == 0 {
            p.push("scene.fruit_count must be at least 1".to_string());
        }
        if !(s.fruit_radius > 0.0) {
            p.push("scene.fruit_radius must be positive".to_string());
        }
        if !(s.canopy_radius > 2.0 * s.fruit_radius) {
            p.push("scene.canopy_radius must exceed twice scene.fruit_radius".to_string());
        }
        p.extend(self.cameras.problems());
        if let Err(e) = self.field.validate() {
            p.push(format!("field: {e}"));
        }
        if self.field.head_type != HeadType::RgbSigma {
            p.push("field.head_type must be rgb_sigma (the joint baseline adds its mask head itself)".to_string());
        }
        if self.render.samples_per_ray < 2 {
            p.push("render.samples_per_ray must be at least 2".to_string());
        }
        p.extend(self.stage1.problems("stage1"));
        p.extend(self.stage2.problems("stage2"));
        p.extend(self.joint.problems("joint"));
        let (a, b) = (self.stage_bounds(&self.stage1), self.stage_bounds(&self.stage2));
        if a.0 != b.0 {
            p.push(format!("stage2.near ({}) must equal stage1.near ({})", b.0, a.0));
        }
        if a.1 != b.1 {
            p.push(format!("stage2.far ({}) must equal stage1.far ({})", b.1, a.1));
        }
        p.extend(self.extract.problems());
        p.extend(self.cluster.problems());
        let e = &self.eval;
        if let Some(&bad) = e.held_out.iter().find(|&&i| i >= self.cameras.n_views) {
            p.push(format!("eval.held_out index {bad} exceeds cameras.n_views"));
        }
        if e.held_out.len() >= self.cameras.n_views {
            p.push("eval.held_out must leave at least one training view".to_string());
        }
        if e.density_samples_per_ray < 2 {
            p.push("eval.density_samples_per_ray must be at least 2".to_string());
        }
        if !(e.precision_leaf > 0.0) {
            p.push("eval.precision_leaf must be positive".to_string());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(PipelineConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), c);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let mut c = PipelineConfig::default();
        c.set("stage1.steps=7").unwrap();
        c.set("cameras.far=3.5").unwrap();
        c.set("mask_kind=multiclass").unwrap();
        c.set("eval.held_out=[1,2]").unwrap();
        assert_eq!(c.stage1.steps, 7);
        assert_eq!(c.cameras.far, 3.5);
        assert_eq!(c.mask_kind, MaskKind::Multiclass);
        assert_eq!(c.eval.held_out, vec![1, 2]);
        assert!(c.set("stage1.nope=1").is_err());
        assert!(c.set("stage1.steps=\"many\"").is_err());
    }

    #[test]
    fn mismatched_far_planes_name_the_field() {
        let mut c = PipelineConfig::default();
        c.set("stage2.far=3.0").unwrap();
        let Err(Error::Config(p)) = c.validate() else {
            panic!("expected a config error");
        };
        assert!(p.iter().any(|m| m.starts_with("stage2.far")), "{p:?}");
    }
}
