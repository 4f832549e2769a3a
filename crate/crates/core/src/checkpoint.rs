//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic  "NSEGCKPT"            8 bytes
//! version u32                  (= 1)
//! stage   u8                   0 stage1_rgb, 1 stage2_mask, 2 joint
//! head    u8                   0 rgb_sigma, 1 rgb_sigma_mask
//! reserved u16                 0
//! pos_frequencies u32, dir_frequencies u32, trunk_depth u32, trunk_width u32
//! near f64, far f64            sampling bounds the field was fit with
//! count u64                    parameter count
//! params f32 * count
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldParams, HeadType};
use crate::fsutil;

const MAGIC: &[u8; 8] = b"NSEGCKPT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 16 + 16 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1Rgb,
    Stage2Mask,
    Joint,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Stage1Rgb => "stage1_rgb",
            Stage::Stage2Mask => "stage2_mask",
            Stage::Joint => "joint",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub params: FieldParams<f32>,
    pub near: f64,
    pub far: f64,
}

impl Checkpoint {
    pub fn config(&self) -> &FieldConfig {
        &self.params.config
    }

    pub fn require_stage(&self, stage: Stage) -> Result<()> {
        if self.stage != stage {
            return Err(Error::StageMismatch {
                expected: stage.to_string(),
                found: self.stage.to_string(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.params.config;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.stage {
            Stage::Stage1Rgb => 0,
            Stage::Stage2Mask => 1,
            Stage::Joint => 2,
        });
        out.push(match c.head_type {
            HeadType::RgbSigma => 0,
            HeadType::RgbSigmaMask => 1,
        });
        out.extend_from_slice(&0u16.to_le_bytes());
        for v in [c.pos_frequencies, c.dir_frequencies, c.trunk_depth, c.trunk_width] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.near.to_le_bytes());
        out.extend_from_slice(&self.far.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in &self.params.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Checkpoint(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("bad magic tag".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version} (expected {VERSION})")));
        }
        let stage = match bytes[12] {
            0 => Stage::Stage1Rgb,
            1 => Stage::Stage2Mask,
            2 => Stage::Joint,
            s => return Err(Error::Checkpoint(format!("unknown stage tag {s}"))),
        };
        let head_type = match bytes[13] {
            0 => HeadType::RgbSigma,
            1 => HeadType::RgbSigmaMask,
            h => return Err(Error::Checkpoint(format!("unknown head type {h}"))),
        };
        let config = FieldConfig {
            pos_frequencies: u32_at(16) as usize,
            dir_frequencies: u32_at(20) as usize,
            trunk_depth: u32_at(24) as usize,
            trunk_width: u32_at(28) as usize,
            head_type,
        };
        let near = f64_at(32);
        let far = f64_at(40);
        let count = u64::from_le_bytes(bytes[48..56].try_into().unwrap()) as usize;
        config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        if count != config.param_count() {
            return Err(Error::Checkpoint(format!(
                "parameter count {count} does not match the architecture ({})",
                config.param_count()
            )));
        }
        let body = &bytes[HEADER_LEN..];
        if body.len() != 4 * count {
            return Err(Error::Checkpoint(format!(
                "truncated parameters: {} bytes for {count} floats",
                body.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            stage,
            params: FieldParams::from_values(config, values)?,
            near,
            far,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &ckpt.to_bytes())
}

/// Loads a checkpoint; with `expected`, its architecture must match exactly.
pub fn load_checkpoint(path: &Path, expected: Option<&FieldConfig>) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::Missing {
            what: "checkpoint".into(),
            path: path.to_path_buf(),
        });
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = Checkpoint::from_bytes(&bytes)?;
    if let Some(want) = expected {
        if ckpt.config() != want {
            return Err(Error::ArchitectureMismatch(format!(
                "{} holds {:?}, requested {:?}",
                path.display(),
                ckpt.config(),
                want
            )));
        }
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(stage: Stage) -> Checkpoint {
        let cfg = FieldConfig {
            trunk_width: 16,
            trunk_depth: 2,
            ..Default::default()
        };
        Checkpoint {
            stage,
            params: FieldParams::init(cfg, 42).unwrap(),
            near: 1.5,
            far: 4.0,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let ck = sample(Stage::Stage1Rgb);
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path, Some(ck.config())).unwrap();
        assert_eq!(back.stage, Stage::Stage1Rgb);
        let bits = |c: &Checkpoint| c.params.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&ck));
        assert_eq!(back, ck);
    }

    #[test]
    fn width_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ckpt");
        let mut cfg = FieldConfig {
            trunk_width: 128,
            ..Default::default()
        };
        let ck = Checkpoint {
            stage: Stage::Stage1Rgb,
            params: FieldParams::init(cfg, 1).unwrap(),
            near: 1.0,
            far: 2.0,
        };
        save_checkpoint(&ck, &path).unwrap();
        cfg.trunk_width = 64;
        assert!(matches!(load_checkpoint(&path, Some(&cfg)), Err(Error::ArchitectureMismatch(_))));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample(Stage::Joint).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..20]).is_err());
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&v), Err(Error::Checkpoint(m)) if m.contains("version")));
        let mut m = bytes;
        m[0] = b'X';
        assert!(Checkpoint::from_bytes(&m).is_err());
    }

    #[test]
    fn stage_requirement() {
        let ck = sample(Stage::Stage2Mask);
        assert!(ck.require_stage(Stage::Stage2Mask).is_ok());
        assert!(matches!(ck.require_stage(Stage::Stage1Rgb), Err(Error::StageMismatch { .. })));
    }
}
