//! ASCII PLY point clouds with per-vertex position, display colour, class
//! label and cluster id:
//!
//! ```text
//! ply
//! format ascii 1.0
//! comment source <invnerf|sa3d|synthetic_gt>
//! element vertex <N>
//! property double x
//! property double y
//! property double z
//! property uchar red
//! property uchar green
//! property uchar blue
//! property int label
//! property int cluster
//! end_header
//! <x> <y> <z> <r> <g> <b> <label> <cluster>     (N lines)
//! ```
//!
//! Coordinates are printed in shortest round-trip form, so reading a file
//! back restores them bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::cloud::{LabeledPointCloud, SourceTag};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::Vec3;

const PALETTE: [[u8; 3]; 10] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
];

fn display_color(label: u32, cluster: i64) -> [u8; 3] {
    if cluster >= 0 {
        PALETTE[cluster as usize % PALETTE.len()]
    } else if label > 0 {
        PALETTE[(label as usize - 1) % PALETTE.len()]
    } else {
        [200, 200, 200]
    }
}

pub fn to_ply_string(cloud: &LabeledPointCloud) -> Result<String> {
    cloud.validate()?;
    let mut s = String::with_capacity(64 * cloud.len() + 256);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "comment source {}", cloud.source.as_str());
    let _ = writeln!(s, "element vertex {}", cloud.len());
    for p in ["x", "y", "z"] {
        let _ = writeln!(s, "property double {p}");
    }
    for p in ["red", "green", "blue"] {
        let _ = writeln!(s, "property uchar {p}");
    }
    s.push_str("property int label\nproperty int cluster\nend_header\n");
    for i in 0..cloud.len() {
        let p = &cloud.points[i];
        let c = display_color(cloud.labels[i], cloud.cluster_ids[i]);
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {}",
            p.x, p.y, p.z, c[0], c[1], c[2], cloud.labels[i], cloud.cluster_ids[i]
        );
    }
    Ok(s)
}

pub fn write_ply(cloud: &LabeledPointCloud, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, to_ply_string(cloud)?.as_bytes())
}

pub fn read_ply(path: &Path) -> Result<LabeledPointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text)
}

pub fn parse_ply(text: &str) -> Result<LabeledPointCloud> {
    let mut lines = text.lines();
    if lines.next() != Some("ply") || lines.next() != Some("format ascii 1.0") {
        return Err(Error::Ply("not an ASCII PLY file".into()));
    }
    let mut count = None;
    let mut source = SourceTag::Invnerf;
    let mut properties = Vec::new();
    for line in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["comment", "source", tag] => {
                source = SourceTag::parse(tag).ok_or_else(|| Error::Ply(format!("unknown source tag {tag}")))?
            }
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| Error::Ply(format!("bad vertex count {n}")))?)
            }
            ["property", _, name] => properties.push(name.to_string()),
            other => return Err(Error::Ply(format!("unexpected header line {other:?}"))),
        }
    }
    let expected = ["x", "y", "z", "red", "green", "blue", "label", "cluster"];
    if properties != expected {
        return Err(Error::Ply(format!("unexpected vertex properties {properties:?}")));
    }
    let count = count.ok_or_else(|| Error::Ply("missing vertex element".into()))?;
    let mut cloud = LabeledPointCloud::new(source);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 8 {
            return Err(Error::Ply(format!("vertex {i} has {} fields", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Ply(format!("bad number {s:?} in vertex {i}")));
        let p = Vec3::new(num(f[0])?, num(f[1])?, num(f[2])?);
        let label = f[6].parse::<u32>().map_err(|_| Error::Ply(format!("bad label in vertex {i}")))?;
        let cluster = f[7].parse::<i64>().map_err(|_| Error::Ply(format!("bad cluster in vertex {i}")))?;
        cloud.push(p, label, cluster);
    }
    if cloud.len() != count {
        return Err(Error::Ply(format!("header declares {count} vertices, body has {}", cloud.len())));
    }
    Ok(cloud)
}
