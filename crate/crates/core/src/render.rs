//! Ray generation, stratified sampling and front-to-back compositing.
//!
//! Sampling and compositing run in `f64`; the field is queried in its own
//! precision. With `T_i = exp(-sum_{j<i} sigma_j delta_j)` and
//! `w_i = T_i (1 - exp(-sigma_i delta_i))`, a ray renders
//! `sum_i w_i c_i + T_{N+1} c_bg`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraFrame;
use crate::error::{Error, Result};
use crate::field::{BatchOutput, FieldParams, Tape, Upstream};
use crate::scalar::Scalar;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub samples_per_ray: usize,
    pub jitter: bool,
    pub background: [f64; 3],
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            samples_per_ray: 64,
            jitter: false,
            background: [0.0; 3],
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_ray < 2 {
            return Err(Error::InvalidArgument(format!(
                "samples_per_ray must be at least 2, got {}",
                self.samples_per_ray
            )));
        }
        Ok(())
    }
}

/// Identifies a ray's jitter stream: same key, same offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JitterKey {
    pub seed: u64,
    pub frame: u64,
    pub pixel: u64,
    pub step: u64,
}

impl JitterKey {
    pub fn rng(&self) -> ChaCha8Rng {
        let h = splitmix64(self.seed ^ splitmix64(self.frame ^ splitmix64(self.pixel ^ splitmix64(self.step))));
        ChaCha8Rng::seed_from_u64(h)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Ray through the center of pixel `(px, py)`.
pub fn pixel_to_ray(camera: &CameraFrame, px: u32, py: u32) -> Ray {
    Ray {
        origin: camera.center(),
        dir: camera.direction_through(px as f64 + 0.5, py as f64 + 0.5),
        near: camera.near,
        far: camera.far,
    }
}

/// Stratified depths over `[near, far]` and their step sizes. Without jitter
/// each depth is its bin midpoint; the last step runs to `far`.
pub fn sample_ray(ray: &Ray, config: &RenderConfig, jitter: Option<JitterKey>) -> (Vec<f64>, Vec<f64>) {
    let n = config.samples_per_ray;
    let bin = (ray.far - ray.near) / n as f64;
    let mut rng = jitter.filter(|_| config.jitter).map(|k| k.rng());
    let t: Vec<f64> = (0..n)
        .map(|i| {
            let u = match rng.as_mut() {
                Some(r) => r.gen::<f64>(),
                None => 0.5,
            };
            ray.near + (i as f64 + u) * bin
        })
        .collect();
    let delta = (0..n)
        .map(|i| if i + 1 < n { t[i + 1] - t[i] } else { ray.far - t[i] })
        .collect();
    (t, delta)
}

/// Transmittances `T_1..T_{N+1}` and weights `w_1..w_N` of one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub transmittance: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Composite {
    pub fn residual_transmittance(&self) -> f64 {
        *self.transmittance.last().expect("N+1 transmittances")
    }
}

pub fn transmittance_weights(sigma: &[f64], delta: &[f64]) -> Composite {
    debug_assert_eq!(sigma.len(), delta.len());
    let n = sigma.len();
    let mut transmittance = Vec::with_capacity(n + 1);
    let mut weights = Vec::with_capacity(n);
    let mut depth = 0.0;
    transmittance.push(1.0);
    for i in 0..n {
        let tau = sigma[i] * delta[i];
        let t_i = transmittance[i];
        weights.push(t_i * -(-tau).exp_m1());
        depth += tau;
        transmittance.push((-depth).exp());
    }
    Composite {
        transmittance,
        weights,
    }
}

/// `sum_i w_i v_i + T_{N+1} bg` for one channel.
fn accumulate(comp: &Composite, values: impl Iterator<Item = f64>, bg: f64) -> f64 {
    comp.weights.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() + comp.residual_transmittance() * bg
}

/// Optical-depth gradient of `sum_i w_i a_i + T_{N+1} a_bg` given per-sample
/// projections `a_i`: `T_{k+1} a_k - (total - sum_{i<=k} w_i a_i)`.
fn depth_gradient(comp: &Composite, a: &[f64], total: f64, out: &mut [f64]) {
    let mut prefix = 0.0;
    for k in 0..a.len() {
        prefix += comp.weights[k] * a[k];
        out[k] += comp.transmittance[k + 1] * a[k] - (total - prefix);
    }
}

/// Anything that can answer batched field queries.
pub trait RadianceField {
    fn query(&self, points: &[[f32; 3]], dirs: &[[f32; 3]]) -> BatchOutput<f32>;

    fn density(&self, points: &[[f32; 3]]) -> Vec<f32> {
        let dirs = vec![[0.0, 0.0, 1.0]; points.len()];
        self.query(points, &dirs).sigma
    }

    fn has_mask(&self) -> bool;
}

impl RadianceField for FieldParams<f32> {
    fn query(&self, points: &[[f32; 3]], dirs: &[[f32; 3]]) -> BatchOutput<f32> {
        self.forward_batch(points, dirs)
    }

    fn density(&self, points: &[[f32; 3]]) -> Vec<f32> {
        self.density_batch(points)
    }

    fn has_mask(&self) -> bool {
        self.config.has_mask()
    }
}

fn to_f32(v: &Vec3) -> [f32; 3] {
    [v.x as f32, v.y as f32, v.z as f32]
}

/// Fully evaluated samples of one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rgb: Vec<[f64; 3]>,
    pub mask: Option<Vec<f64>>,
    pub composite: Composite,
}

impl RaySamples {
    pub fn color(&self, background: [f64; 3]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (ch, out) in c.iter_mut().enumerate() {
            *out = accumulate(&self.composite, self.rgb.iter().map(|v| v[ch]), background[ch]);
        }
        c
    }

    pub fn mask_value(&self) -> Option<f64> {
        self.mask
            .as_ref()
            .map(|m| accumulate(&self.composite, m.iter().copied(), 0.0))
    }
}

/// Samples and evaluates a batch of rays with one field query.
pub fn march_rays<F: RadianceField + ?Sized>(
    field: &F,
    rays: &[Ray],
    config: &RenderConfig,
    jitter: Option<&[JitterKey]>,
) -> Vec<RaySamples> {
    let n = config.samples_per_ray;
    let mut points = Vec::with_capacity(rays.len() * n);
    let mut dirs = Vec::with_capacity(rays.len() * n);
    let mut steps = Vec::with_capacity(rays.len());
    for (r, ray) in rays.iter().enumerate() {
        let (t, delta) = sample_ray(ray, config, jitter.map(|k| k[r]));
        let d = to_f32(&ray.dir);
        for &ti in &t {
            points.push(to_f32(&ray.at(ti)));
            dirs.push(d);
        }
        steps.push((t, delta));
    }
    let out = field.query(&points, &dirs);
    steps
        .into_iter()
        .enumerate()
        .map(|(r, (t, delta))| {
            let range = r * n..(r + 1) * n;
            let sigma: Vec<f64> = out.sigma[range.clone()].iter().map(|&s| s as f64).collect();
            let rgb = range
                .clone()
                .map(|i| [out.rgb[3 * i] as f64, out.rgb[3 * i + 1] as f64, out.rgb[3 * i + 2] as f64])
                .collect();
            let mask = out.mask.as_ref().map(|m| m[range].iter().map(|&v| v as f64).collect());
            let composite = transmittance_weights(&sigma, &delta);
            RaySamples {
                t,
                delta,
                sigma,
                rgb,
                mask,
                composite,
            }
        })
        .collect()
}

pub fn render_color<F: RadianceField + ?Sized>(field: &F, ray: &Ray, config: &RenderConfig) -> [f64; 3] {
    march_rays(field, std::slice::from_ref(ray), config, None)[0].color(config.background)
}

/// Rendered mask of the joint model, `sum_i w_i m_i` (no background term).
pub fn render_mask_joint<F: RadianceField + ?Sized>(field: &F, ray: &Ray, config: &RenderConfig) -> Result<f64> {
    if !field.has_mask() {
        return Err(Error::InvalidArgument("render_mask_joint needs a field with a mask head".into()));
    }
    Ok(march_rays(field, std::slice::from_ref(ray), config, None)[0]
        .mask_value()
        .expect("mask head"))
}

/// Raw field density at each point.
pub fn query_density<F: RadianceField + ?Sized>(field: &F, points: &[Vec3]) -> Vec<f32> {
    let pts: Vec<[f32; 3]> = points.iter().map(to_f32).collect();
    field.density(&pts)
}

/// Forward state of a differentiable batch render.
pub struct RenderTape<T> {
    tape: Tape<T>,
    samples: usize,
    delta: Vec<Vec<f64>>,
    composites: Vec<Composite>,
    pub colors: Vec<[f64; 3]>,
    pub masks: Option<Vec<f64>>,
}

/// Renders `rays` keeping everything needed to backpropagate into `params`.
pub fn render_with_tape<T: Scalar>(
    params: &FieldParams<T>,
    rays: &[Ray],
    config: &RenderConfig,
    jitter: Option<&[JitterKey]>,
) -> RenderTape<T> {
    let n = config.samples_per_ray;
    let mut points = Vec::with_capacity(rays.len() * n);
    let mut dirs = Vec::with_capacity(rays.len() * n);
    let mut deltas = Vec::with_capacity(rays.len());
    for (r, ray) in rays.iter().enumerate() {
        let (t, delta) = sample_ray(ray, config, jitter.map(|k| k[r]));
        let d = [T::from_f64(ray.dir.x), T::from_f64(ray.dir.y), T::from_f64(ray.dir.z)];
        for &ti in &t {
            let p = ray.at(ti);
            points.push([T::from_f64(p.x), T::from_f64(p.y), T::from_f64(p.z)]);
            dirs.push(d);
        }
        deltas.push(delta);
    }
    let tape = params.forward_with_tape(&points, &dirs);
    let out = tape.output();
    let mut composites = Vec::with_capacity(rays.len());
    let mut colors = Vec::with_capacity(rays.len());
    let mut masks = out.mask.as_ref().map(|_| Vec::with_capacity(rays.len()));
    for (r, delta) in deltas.iter().enumerate() {
        let base = r * n;
        let sigma: Vec<f64> = out.sigma[base..base + n].iter().map(|s| s.as_f64()).collect();
        let comp = transmittance_weights(&sigma, delta);
        let mut c = [0.0; 3];
        for (ch, cv) in c.iter_mut().enumerate() {
            *cv = accumulate(
                &comp,
                (0..n).map(|i| out.rgb[3 * (base + i) + ch].as_f64()),
                config.background[ch],
            );
        }
        colors.push(c);
        if let (Some(ms), Some(m)) = (masks.as_mut(), out.mask.as_ref()) {
            ms.push(accumulate(&comp, m[base..base + n].iter().map(|v| v.as_f64()), 0.0));
        }
        composites.push(comp);
    }
    RenderTape {
        tape,
        samples: n,
        delta: deltas,
        composites,
        colors,
        masks,
    }
}

impl<T: Scalar> RenderTape<T> {
    /// Accumulates parameter gradients of a loss with per-ray colour
    /// gradients `d_color` and optional mask gradients `d_mask`.
    pub fn backward(
        &self,
        params: &FieldParams<T>,
        d_color: &[[f64; 3]],
        d_mask: Option<&[f64]>,
        grad: &mut [T],
    ) -> Result<()> {
        let rays = self.composites.len();
        if d_color.len() != rays || d_mask.is_some_and(|m| m.len() != rays) {
            return Err(Error::Shape(format!(
                "{} colour gradients for {rays} rays",
                d_color.len()
            )));
        }
        let n = self.samples;
        let out = self.tape.output();
        let mut d_sigma = vec![T::zero(); rays * n];
        let mut d_rgb = vec![T::zero(); rays * n * 3];
        let mut d_m = d_mask.map(|_| vec![T::zero(); rays * n]);
        let mut a = vec![0.0; n];
        let mut d_tau = vec![0.0; n];
        for r in 0..rays {
            let comp = &self.composites[r];
            let base = r * n;
            let g = d_color[r];
            d_tau.fill(0.0);
            for i in 0..n {
                let c = &out.rgb[3 * (base + i)..3 * (base + i) + 3];
                a[i] = (0..3).map(|ch| c[ch].as_f64() * g[ch]).sum();
                for ch in 0..3 {
                    d_rgb[3 * (base + i) + ch] = T::from_f64(comp.weights[i] * g[ch]);
                }
            }
            let total: f64 = (0..3).map(|ch| self.colors[r][ch] * g[ch]).sum();
            depth_gradient(comp, &a, total, &mut d_tau);
            if let (Some(dm), Some(gm), Some(m), Some(mv)) = (d_m.as_mut(), d_mask, out.mask.as_ref(), self.masks.as_ref()) {
                let gm = gm[r];
                for i in 0..n {
                    a[i] = m[base + i].as_f64() * gm;
                    dm[base + i] = T::from_f64(comp.weights[i] * gm);
                }
                depth_gradient(comp, &a, mv[r] * gm, &mut d_tau);
            }
            for i in 0..n {
                d_sigma[base + i] = T::from_f64(d_tau[i] * self.delta[r][i]);
            }
        }
        params.backward(
            &self.tape,
            Upstream {
                sigma: &d_sigma,
                rgb: &d_rgb,
                mask: d_m.as_deref(),
            },
            grad,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{look_at, Intrinsics};
    use crate::field::{FieldConfig, HeadType};

    fn axis_camera() -> CameraFrame {
        let k = Intrinsics {
            fx: 50.0,
            fy: 55.0,
            cx: 32.5,
            cy: 24.5,
            width: 64,
            height: 48,
        };
        CameraFrame::new(nalgebra::Matrix4::identity(), k, 0.5, 6.0).unwrap()
    }

    #[test]
    fn principal_pixel_looks_down_negative_z() {
        let ray = pixel_to_ray(&axis_camera(), 32, 24);
        assert!((ray.dir - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
        assert_eq!((ray.near, ray.far), (0.5, 6.0));
    }

    #[test]
    fn pixel_rays_are_unit_and_reproject_to_their_pixel() {
        let cam = CameraFrame::new(
            look_at(Vec3::new(2.0, 1.0, 3.0), Vec3::new(0.0, 0.2, 0.0), Vec3::y()).unwrap(),
            Intrinsics::from_fov(40, 30, 50.0),
            0.5,
            6.0,
        )
        .unwrap();
        for py in 0..30 {
            for px in 0..40 {
                let ray = pixel_to_ray(&cam, px, py);
                assert!((ray.dir.norm() - 1.0).abs() < 1e-9);
                let (u, v) = cam.project(&ray.at(2.0)).unwrap();
                assert!((u - 0.5 - px as f64).abs() < 1e-4 && (v - 0.5 - py as f64).abs() < 1e-4);
            }
        }
    }

    fn ray(near: f64, far: f64) -> Ray {
        Ray {
            origin: Vec3::zeros(),
            dir: Vec3::z(),
            near,
            far,
        }
    }

    #[test]
    fn midpoint_sampling_by_hand() {
        let cfg = RenderConfig {
            samples_per_ray: 4,
            ..Default::default()
        };
        let (t, d) = sample_ray(&ray(0.0, 4.0), &cfg, None);
        assert_eq!(t, vec![0.5, 1.5, 2.5, 3.5]);
        assert_eq!(d, vec![1.0, 1.0, 1.0, 0.5]);
        assert_eq!(d.iter().sum::<f64>(), 4.0 - t[0]);
    }

    #[test]
    fn jittered_samples_stay_in_their_bins() {
        let cfg = RenderConfig {
            samples_per_ray: 16,
            jitter: true,
            ..Default::default()
        };
        let r = ray(1.0, 3.0);
        let key = JitterKey { seed: 1, frame: 2, pixel: 3, step: 4 };
        let (t, d) = sample_ray(&r, &cfg, Some(key));
        let bin = 2.0 / 16.0;
        for (i, ti) in t.iter().enumerate() {
            assert!(*ti >= 1.0 + i as f64 * bin && *ti < 1.0 + (i + 1) as f64 * bin);
        }
        assert!(d.iter().all(|&x| x > 0.0));
        assert_eq!(sample_ray(&r, &cfg, Some(key)), (t.clone(), d));
        let other = sample_ray(&r, &cfg, Some(JitterKey { step: 5, ..key })).0;
        assert_ne!(other, t);
    }

    #[test]
    fn empty_space_is_fully_transmissive() {
        let c = transmittance_weights(&[0.0; 5], &[0.3; 5]);
        assert!(c.transmittance.iter().all(|&t| t == 1.0));
        assert!(c.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn ln2_optical_depth_halves_transmittance() {
        let c = transmittance_weights(&[std::f64::consts::LN_2, 1.0], &[1.0, 1.0]);
        assert!((c.weights[0] - 0.5).abs() < 1e-15);
        assert!((c.transmittance[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn joint_mask_requires_a_mask_head() {
        let p = FieldParams::<f32>::init(FieldConfig::default(), 0).unwrap();
        let cfg = RenderConfig::default();
        assert!(render_mask_joint(&p, &ray(0.1, 1.0), &cfg).is_err());
        let j = FieldParams::<f32>::init(
            FieldConfig {
                head_type: HeadType::RgbSigmaMask,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let m = render_mask_joint(&j, &ray(0.1, 1.0), &cfg).unwrap();
        assert!((0.0..=1.0).contains(&m));
    }
}
