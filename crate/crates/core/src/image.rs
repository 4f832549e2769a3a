//! Float images and their 8-bit binary PPM (P6) / PGM (P5) encodings.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major image with 1 (mask) or 3 (RGB) interleaved channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "images have 1 or 3 channels");
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width as usize * height as usize * channels],
        }
    }

    pub fn filled(width: u32, height: u32, channels: usize, value: f32) -> Self {
        let mut img = Self::new(width, height, channels);
        img.data.fill(value);
        img
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[f32] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, value: &[f32]) {
        let i = self.index(x, y);
        let c = self.channels;
        if value.len() == c {
            self.data[i..i + c].copy_from_slice(value);
        } else {
            // gray into RGB or mean of RGB into gray
            let v = value.iter().sum::<f32>() / value.len() as f32;
            self.data[i..i + c].fill(v);
        }
    }

    /// Mean over channels of pixel `i` (linear index).
    pub fn mean_at(&self, i: usize) -> f32 {
        let c = self.channels;
        self.data[i * c..(i + 1) * c].iter().sum::<f32>() / c as f32
    }

    /// Pixel `i` as an RGB triple, replicating gray channels.
    pub fn rgb_at(&self, i: usize) -> [f32; 3] {
        if self.channels == 3 {
            [self.data[3 * i], self.data[3 * i + 1], self.data[3 * i + 2]]
        } else {
            [self.data[i]; 3]
        }
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// 8-bit quantization used by the file formats.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_bytes(width: u32, height: u32, channels: usize, bytes: &[u8]) -> Self {
        Self {
            width,
            height,
            channels,
            data: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }

    /// Writes P6 for RGB images and P5 for single-channel images.
    pub fn write_pnm(&self, path: &Path) -> Result<()> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut buf = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        buf.extend(self.to_bytes());
        crate::fsutil::write_atomic(path, &buf)
    }

    pub fn read_pnm(path: &Path) -> Result<Image> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (width, height, channels, raw) = parse_pnm(&bytes).map_err(|reason| Error::Image {
            path: path.to_path_buf(),
            reason,
        })?;
        Ok(Image::from_bytes(width, height, channels, raw))
    }

    /// Raw 8-bit samples of a P5/P6 file.
    pub fn read_pnm_bytes(path: &Path) -> Result<(u32, u32, usize, Vec<u8>)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (w, h, c, raw) = parse_pnm(&bytes).map_err(|reason| Error::Image {
            path: path.to_path_buf(),
            reason,
        })?;
        Ok((w, h, c, raw.to_vec()))
    }
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn parse_pnm(bytes: &[u8]) -> std::result::Result<(u32, u32, usize, &[u8]), String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token()?.as_str() {
        "P6" => 3,
        "P5" => 1,
        other => return Err(format!("unsupported magic {other:?}")),
    };
    let num = |s: String| s.parse::<u32>().map_err(|_| format!("bad header field {s:?}"));
    let width = num(token()?)?;
    let height = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval != 255 {
        return Err(format!("only 8-bit images are supported (maxval {maxval})"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let len = width as usize * height as usize * channels;
    if bytes.len() < start + len {
        return Err(format!("expected {len} raster bytes, found {}", bytes.len().saturating_sub(start)));
    }
    Ok((width, height, channels, &bytes[start..start + len]))
}
