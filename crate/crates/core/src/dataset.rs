//! Posed image datasets on disk.
//!
//! A dataset directory holds `manifest.json` plus one `frame_####.ppm` (RGB)
//! or `frame_####.pgm` (mask) per frame. The manifest records the kind, the
//! declared class levels, the background colour and, per frame, the file
//! name, intrinsics, row-major 4x4 camera-to-world matrix and near/far.
//! Mask level `v` is stored as the byte `round(255 v)` and restored to the
//! exact declared value on load.

use std::fs;
use std::path::Path;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraFrame, Intrinsics};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::image::{quantize, Image};

pub const MANIFEST: &str = "manifest.json";
const FORMAT_TAG: &str = "nerfseg-dataset";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Rgb,
    BinaryMask,
    MulticlassMask,
}

impl DatasetKind {
    pub fn is_mask(self) -> bool {
        self != DatasetKind::Rgb
    }

    pub fn channels(self) -> usize {
        if self.is_mask() {
            1
        } else {
            3
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub camera: CameraFrame,
    pub image: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub frames: Vec<Frame>,
    /// Intensity of classes `1..=K`; empty unless multi-class.
    pub class_levels: Vec<f32>,
    /// Colour composited behind the field when fitting this dataset.
    pub background: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    kind: DatasetKind,
    #[serde(default)]
    class_levels: Vec<f32>,
    background: [f64; 3],
    frames: Vec<FrameEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameEntry {
    file: String,
    intrinsics: Intrinsics,
    camera_to_world: [f64; 16],
    near: f64,
    far: f64,
}

impl Dataset {
    pub fn new(kind: DatasetKind, frames: Vec<Frame>, class_levels: Vec<f32>, background: [f64; 3]) -> Result<Self> {
        let ds = Self {
            kind,
            frames,
            class_levels,
            background,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn resolution(&self) -> Option<(u32, u32)> {
        self.frames.first().map(|f| (f.image.width, f.image.height))
    }

    /// Frames at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let frames = indices
            .iter()
            .map(|&i| {
                self.frames
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("frame index {i} out of range ({})", self.len())))
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            frames,
            ..self.clone_meta()
        })
    }

    /// All frames except `excluded`.
    pub fn without(&self, excluded: &[usize]) -> Dataset {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .filter(|(i, _)| !excluded.contains(i))
            .map(|(_, f)| f.clone())
            .collect();
        Dataset {
            frames,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            kind: self.kind,
            frames: Vec::new(),
            class_levels: self.class_levels.clone(),
            background: self.background,
        }
    }

    /// The values a pixel of this dataset may take.
    pub fn allowed_values(&self) -> Vec<f32> {
        match self.kind {
            DatasetKind::Rgb => Vec::new(),
            DatasetKind::BinaryMask => vec![0.0, 1.0],
            DatasetKind::MulticlassMask => std::iter::once(0.0).chain(self.class_levels.iter().copied()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DatasetKind::MulticlassMask => validate_levels(&self.class_levels)?,
            _ if !self.class_levels.is_empty() => {
                return Err(Error::Manifest("class_levels are only allowed for multiclass_mask datasets".into()))
            }
            _ => {}
        }
        let Some((w, h)) = self.resolution() else {
            return Ok(());
        };
        let allowed = self.allowed_values();
        for (i, f) in self.frames.iter().enumerate() {
            f.camera.validate()?;
            let img = &f.image;
            if img.width != w || img.height != h || f.camera.width() != w || f.camera.height() != h {
                return Err(Error::Resolution(format!(
                    "frame {i} is {}x{} (camera {}x{}), dataset is {w}x{h}",
                    img.width,
                    img.height,
                    f.camera.width(),
                    f.camera.height()
                )));
            }
            if img.channels != self.kind.channels() {
                return Err(Error::Resolution(format!(
                    "frame {i} has {} channels, {:?} needs {}",
                    img.channels,
                    self.kind,
                    self.kind.channels()
                )));
            }
            if self.kind.is_mask() {
                if let Some(v) = img.data.iter().find(|v| !allowed.contains(v)) {
                    let err = format!("frame {i} has mask value {v}, allowed {allowed:?}");
                    return Err(if self.kind == DatasetKind::BinaryMask {
                        Error::InvalidArgument(format!("non-binary mask: {err}"))
                    } else {
                        Error::InvalidArgument(err)
                    });
                }
            }
        }
        Ok(())
    }
}

/// Class levels must be strictly increasing in (0, 1] and distinct at 8 bits.
pub fn validate_levels(levels: &[f32]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Manifest("multiclass datasets need at least one class level".into()));
    }
    let mut prev = 0u8;
    for &l in levels {
        if !(l > 0.0 && l <= 1.0) {
            return Err(Error::Manifest(format!("class level {l} outside (0, 1]")));
        }
        let q = quantize(l);
        if q <= prev {
            return Err(Error::Manifest(format!(
                "class levels {levels:?} must be strictly increasing and distinct at 8 bits"
            )));
        }
        prev = q;
    }
    Ok(())
}

fn frame_name(i: usize, kind: DatasetKind) -> String {
    format!("frame_{i:04}.{}", if kind.is_mask() { "pgm" } else { "ppm" })
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    dataset.validate()?;
    fsutil::replace_dir_atomic(dir, |tmp| {
        let mut frames = Vec::with_capacity(dataset.len());
        for (i, f) in dataset.frames.iter().enumerate() {
            let file = frame_name(i, dataset.kind);
            f.image.write_pnm(&tmp.join(&file))?;
            let mut m = [0.0; 16];
            for r in 0..4 {
                for c in 0..4 {
                    m[4 * r + c] = f.camera.camera_to_world[(r, c)];
                }
            }
            frames.push(FrameEntry {
                file,
                intrinsics: f.camera.intrinsics,
                camera_to_world: m,
                near: f.camera.near,
                far: f.camera.far,
            });
        }
        let manifest = Manifest {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            kind: dataset.kind,
            class_levels: dataset.class_levels.clone(),
            background: dataset.background,
            frames,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(tmp.join(MANIFEST), text).map_err(|e| Error::io(tmp.join(MANIFEST), e))
    })
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join(MANIFEST);
    if !mpath.exists() {
        return Err(Error::Missing {
            what: "dataset manifest".into(),
            path: mpath,
        });
    }
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", mpath.display())))?;
    if manifest.format != FORMAT_TAG || manifest.version != FORMAT_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported dataset format {:?} version {}",
            manifest.format, manifest.version
        )));
    }
    if manifest.kind == DatasetKind::MulticlassMask {
        validate_levels(&manifest.class_levels)?;
    }
    let levels = &manifest.class_levels;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for entry in &manifest.frames {
        let path = dir.join(&entry.file);
        let (w, h, channels, bytes) = Image::read_pnm_bytes(&path)?;
        if channels != manifest.kind.channels() {
            return Err(Error::Resolution(format!(
                "{} has {channels} channels, {:?} needs {}",
                path.display(),
                manifest.kind,
                manifest.kind.channels()
            )));
        }
        let data = match manifest.kind {
            DatasetKind::Rgb => bytes.iter().map(|&b| b as f32 / 255.0).collect(),
            DatasetKind::BinaryMask => bytes
                .iter()
                .map(|&b| match b {
                    0 => Ok(0.0),
                    255 => Ok(1.0),
                    value => Err(Error::NonBinaryMask {
                        path: path.clone(),
                        value,
                    }),
                })
                .collect::<Result<Vec<f32>>>()?,
            DatasetKind::MulticlassMask => bytes
                .iter()
                .map(|&b| {
                    if b == 0 {
                        return Ok(0.0);
                    }
                    levels
                        .iter()
                        .find(|&&l| quantize(l) == b)
                        .copied()
                        .ok_or_else(|| Error::UndeclaredLevel {
                            path: path.clone(),
                            value: b,
                        })
                })
                .collect::<Result<Vec<f32>>>()?,
        };
        let mut pose = Matrix4::zeros();
        for r in 0..4 {
            for c in 0..4 {
                pose[(r, c)] = entry.camera_to_world[4 * r + c];
            }
        }
        let camera = CameraFrame::new(pose, entry.intrinsics, entry.near, entry.far)?;
        frames.push(Frame {
            camera,
            image: Image {
                width: w,
                height: h,
                channels,
                data,
            },
        });
    }
    Dataset::new(manifest.kind, frames, manifest.class_levels, manifest.background)
}
