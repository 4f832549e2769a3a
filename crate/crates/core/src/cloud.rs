use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

pub const UNASSIGNED: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Invnerf,
    Sa3d,
    SyntheticGt,
}

impl SourceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Invnerf => "invnerf",
            SourceTag::Sa3d => "sa3d",
            SourceTag::SyntheticGt => "synthetic_gt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "invnerf" => Some(SourceTag::Invnerf),
            "sa3d" => Some(SourceTag::Sa3d),
            "synthetic_gt" => Some(SourceTag::SyntheticGt),
            _ => None,
        }
    }
}

/// Points with a class label (0 = generic foreground) and a cluster id
/// (`UNASSIGNED` until counted).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    pub points: Vec<Vec3>,
    pub labels: Vec<u32>,
    pub cluster_ids: Vec<i64>,
    pub source: SourceTag,
}

impl LabeledPointCloud {
    pub fn new(source: SourceTag) -> Self {
        Self {
            points: Vec::new(),
            labels: Vec::new(),
            cluster_ids: Vec::new(),
            source,
        }
    }

    pub fn from_points(points: Vec<Vec3>, source: SourceTag) -> Self {
        let n = points.len();
        Self {
            points,
            labels: vec![0; n],
            cluster_ids: vec![UNASSIGNED; n],
            source,
        }
    }

    pub fn push(&mut self, p: Vec3, label: u32, cluster: i64) {
        self.points.push(p);
        self.labels.push(label);
        self.cluster_ids.push(cluster);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.points.len() || self.cluster_ids.len() != self.points.len() {
            return Err(Error::Shape(format!(
                "point cloud arrays differ in length: {} points, {} labels, {} cluster ids",
                self.points.len(),
                self.labels.len(),
                self.cluster_ids.len()
            )));
        }
        if let Some(p) = self.points.iter().find(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite(format!("point {p:?}")));
        }
        Ok(())
    }

    /// Points carrying `label`.
    pub fn with_label(&self, label: u32) -> LabeledPointCloud {
        let mut out = LabeledPointCloud::new(self.source);
        for i in 0..self.len() {
            if self.labels[i] == label {
                out.push(self.points[i], label, self.cluster_ids[i]);
            }
        }
        out
    }
}
