//! Closed-form radiance fields with known geometry, used to check the
//! renderer and the extraction routines against exact answers.

use crate::field::BatchOutput;
use crate::render::RadianceField;
use crate::Vec3;

fn norm2(p: &[f32; 3], c: &Vec3) -> f64 {
    (p[0] as f64 - c.x).powi(2) + (p[1] as f64 - c.y).powi(2) + (p[2] as f64 - c.z).powi(2)
}

/// Constant density, colour and (optionally) mask probability everywhere.
#[derive(Debug, Clone, Copy)]
pub struct Uniform {
    pub sigma: f32,
    pub color: [f32; 3],
    pub mask: Option<f32>,
}

impl RadianceField for Uniform {
    fn query(&self, points: &[[f32; 3]], _dirs: &[[f32; 3]]) -> BatchOutput<f32> {
        let n = points.len();
        BatchOutput {
            sigma: vec![self.sigma; n],
            rgb: self.color.repeat(n),
            mask: self.mask.map(|m| vec![m; n]),
        }
    }

    fn has_mask(&self) -> bool {
        self.mask.is_some()
    }
}

/// Isotropic Gaussian density bump of constant colour.
#[derive(Debug, Clone, Copy)]
pub struct GaussianBump {
    pub center: Vec3,
    pub peak: f64,
    pub std_dev: f64,
    pub color: [f32; 3],
}

impl GaussianBump {
    pub fn density_at(&self, p: &Vec3) -> f64 {
        self.peak * (-(p - self.center).norm_squared() / (2.0 * self.std_dev * self.std_dev)).exp()
    }
}

impl RadianceField for GaussianBump {
    fn query(&self, points: &[[f32; 3]], _dirs: &[[f32; 3]]) -> BatchOutput<f32> {
        let s2 = 2.0 * self.std_dev * self.std_dev;
        BatchOutput {
            sigma: points
                .iter()
                .map(|p| (self.peak * (-norm2(p, &self.center) / s2).exp()) as f32)
                .collect(),
            rgb: self.color.repeat(points.len()),
            mask: None,
        }
    }

    fn has_mask(&self) -> bool {
        false
    }
}

/// Solid balls with uniform density and per-ball colour; empty and black
/// elsewhere.
#[derive(Debug, Clone)]
pub struct Balls {
    pub balls: Vec<(Vec3, f64)>,
    pub sigma: f32,
    pub colors: Vec<[f32; 3]>,
}

impl Balls {
    pub fn single(center: Vec3, radius: f64, sigma: f32) -> Self {
        Self {
            balls: vec![(center, radius)],
            sigma,
            colors: vec![[1.0; 3]],
        }
    }

    fn find(&self, p: &[f32; 3]) -> Option<usize> {
        self.balls.iter().position(|(c, r)| norm2(p, c) <= r * r)
    }
}

impl RadianceField for Balls {
    fn query(&self, points: &[[f32; 3]], _dirs: &[[f32; 3]]) -> BatchOutput<f32> {
        let mut out = BatchOutput {
            sigma: Vec::with_capacity(points.len()),
            rgb: Vec::with_capacity(3 * points.len()),
            mask: None,
        };
        for p in points {
            match self.find(p) {
                Some(k) => {
                    out.sigma.push(self.sigma);
                    out.rgb.extend_from_slice(&self.colors[k]);
                }
                None => {
                    out.sigma.push(0.0);
                    out.rgb.extend_from_slice(&[0.0; 3]);
                }
            }
        }
        out
    }

    fn has_mask(&self) -> bool {
        false
    }
}
