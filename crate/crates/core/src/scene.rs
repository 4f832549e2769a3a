//! Procedural orchard scenes and an analytic ray tracer that renders their
//! RGB views and ground-truth masks.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraFrame;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::Vec3;

pub const AMBIENT: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchardSpec {
    pub fruit_count: usize,
    pub fruit_radius: f64,
    /// Extra clearance between fruit surfaces, added to `2 * fruit_radius`.
    pub fruit_gap: f64,
    pub canopy_center: [f64; 3],
    pub canopy_radius: f64,
    pub trunk_radius: f64,
    /// The trunk rises this far from its base to the canopy center.
    pub trunk_height: f64,
    pub background_albedo: f64,
    pub fruit_albedo: [f64; 3],
    pub trunk_albedo: [f64; 3],
    pub light_direction: [f64; 3],
    pub rng_seed: u64,
}

impl Default for OrchardSpec {
    fn default() -> Self {
        Self {
            fruit_count: 8,
            fruit_radius: 0.2,
            fruit_gap: 0.1,
            canopy_center: [0.0, 0.2, 0.0],
            canopy_radius: 0.8,
            trunk_radius: 0.08,
            trunk_height: 1.2,
            background_albedo: 0.5,
            fruit_albedo: [0.85, 0.2, 0.12],
            trunk_albedo: [0.45, 0.3, 0.15],
            light_direction: [0.35, 1.0, 0.5],
            rng_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    /// Vertical (y-axis) capped cylinder.
    Cylinder { base: [f64; 3], radius: f64, height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub albedo: [f64; 3],
    /// 0 for structure, `1..=K` for fruit instances.
    pub class_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub light_direction: [f64; 3],
    pub background_albedo: f64,
}

/// What a traced view records per pixel.
#[derive(Debug, Clone, PartialEq)]
pub enum RenderMode {
    Rgb,
    /// 1 where the first hit belongs to one of the class ids, else 0.
    Mask(BTreeSet<u32>),
    /// `levels[k - 1]` where the first hit has class `k`, else 0.
    Multiclass(Vec<f32>),
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub normal: Vec3,
    pub primitive: usize,
}

/// Evenly spaced intensity levels `k / K` for classes `1..=K`.
pub fn default_class_levels(classes: usize) -> Vec<f32> {
    (1..=classes).map(|k| k as f32 / classes as f32).collect()
}

impl Scene {
    pub fn empty(background_albedo: f64) -> Self {
        Self {
            primitives: Vec::new(),
            light_direction: [0.0, 1.0, 0.0],
            background_albedo,
        }
    }

    pub fn fruit_count(&self) -> usize {
        self.primitives.iter().filter(|p| p.class_id > 0).count()
    }

    /// `(center, radius)` of each fruit, ordered by class id.
    pub fn fruits(&self) -> Vec<(Vec3, f64)> {
        let mut fruits: Vec<_> = self
            .primitives
            .iter()
            .filter_map(|p| match (&p.shape, p.class_id) {
                (Shape::Sphere { center, radius }, id) if id > 0 => Some((id, Vec3::from(*center), *radius)),
                _ => None,
            })
            .collect();
        fruits.sort_by_key(|f| f.0);
        fruits.into_iter().map(|(_, c, r)| (c, r)).collect()
    }

    /// Class id of the fruit containing `p`, if any.
    pub fn fruit_at(&self, p: &Vec3) -> Option<u32> {
        self.primitives.iter().find_map(|prim| match prim.shape {
            Shape::Sphere { center, radius } if prim.class_id > 0 && (p - Vec3::from(center)).norm() <= radius => {
                Some(prim.class_id)
            }
            _ => None,
        })
    }

    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, prim) in self.primitives.iter().enumerate() {
            let hit = match prim.shape {
                Shape::Sphere { center, radius } => intersect_sphere(origin, dir, &Vec3::from(center), radius),
                Shape::Cylinder { base, radius, height } => {
                    intersect_cylinder(origin, dir, &Vec3::from(base), radius, height)
                }
            };
            if let Some((t, normal)) = hit {
                if best.map_or(true, |b| t < b.t) {
                    best = Some(Hit { t, normal, primitive: i });
                }
            }
        }
        best
    }

    fn shade(&self, hit: &Hit) -> [f32; 3] {
        let light = Vec3::from(self.light_direction).normalize();
        let lambert = hit.normal.dot(&light).max(0.0);
        let k = AMBIENT + (1.0 - AMBIENT) * lambert;
        let a = self.primitives[hit.primitive].albedo;
        [(a[0] * k) as f32, (a[1] * k) as f32, (a[2] * k) as f32]
    }

    fn trace_pixel(&self, camera: &CameraFrame, px: u32, py: u32, mode: &RenderMode) -> [f32; 3] {
        let origin = camera.center();
        let dir = camera.direction_through(px as f64 + 0.5, py as f64 + 0.5);
        let hit = self.intersect(&origin, &dir);
        match mode {
            RenderMode::Rgb => match hit {
                Some(h) => self.shade(&h),
                None => [self.background_albedo as f32; 3],
            },
            RenderMode::Mask(targets) => {
                let on = hit.is_some_and(|h| targets.contains(&self.primitives[h.primitive].class_id));
                [if on { 1.0 } else { 0.0 }; 3]
            }
            RenderMode::Multiclass(levels) => {
                let v = hit
                    .map(|h| self.primitives[h.primitive].class_id)
                    .filter(|&k| k > 0)
                    .and_then(|k| levels.get(k as usize - 1).copied())
                    .unwrap_or(0.0);
                [v; 3]
            }
        }
    }
}

pub fn generate_orchard(spec: &OrchardSpec) -> Result<Scene> {
    if spec.fruit_count < 1 {
        return Err(Error::InvalidArgument("fruit_count must be at least 1".into()));
    }
    if !(spec.fruit_radius > 0.0 && spec.canopy_radius > 2.0 * spec.fruit_radius) {
        return Err(Error::InvalidArgument(format!(
            "canopy_radius ({}) must exceed 2 * fruit_radius ({})",
            spec.canopy_radius, spec.fruit_radius
        )));
    }
    if spec.fruit_gap < 0.0 || spec.trunk_radius < 0.0 || spec.trunk_height < 0.0 {
        return Err(Error::InvalidArgument("gap and trunk dimensions must be non-negative".into()));
    }

    let canopy = Vec3::from(spec.canopy_center);
    let trunk_base = canopy - Vec3::new(0.0, spec.trunk_height, 0.0);
    let r = spec.fruit_radius;
    let min_dist = 2.0 * r + spec.fruit_gap;
    let place_radius = spec.canopy_radius - r;
    let clears_trunk = |c: &Vec3| {
        if spec.trunk_radius == 0.0 || spec.trunk_height == 0.0 || c.y > canopy.y + r || c.y < trunk_base.y - r {
            return true;
        }
        let horizontal = ((c.x - canopy.x).powi(2) + (c.z - canopy.z).powi(2)).sqrt();
        horizontal > spec.trunk_radius + r
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut centers: Vec<Vec3> = Vec::with_capacity(spec.fruit_count);
    let max_attempts = 2000 * spec.fruit_count;
    let mut attempts = 0;
    while centers.len() < spec.fruit_count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::InfeasibleSpec(format!(
                "placed only {} of {} fruits after {max_attempts} attempts",
                centers.len(),
                spec.fruit_count
            )));
        }
        let offset = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if offset.norm() > 1.0 {
            continue;
        }
        let c = canopy + offset * place_radius;
        if centers.iter().all(|o| (o - c).norm() > min_dist) && clears_trunk(&c) {
            centers.push(c);
        }
    }

    let mut primitives = Vec::with_capacity(spec.fruit_count + 1);
    if spec.trunk_radius > 0.0 && spec.trunk_height > 0.0 {
        primitives.push(Primitive {
            shape: Shape::Cylinder {
                base: trunk_base.into(),
                radius: spec.trunk_radius,
                height: spec.trunk_height,
            },
            albedo: spec.trunk_albedo,
            class_id: 0,
        });
    }
    for (k, c) in centers.iter().enumerate() {
        primitives.push(Primitive {
            shape: Shape::Sphere {
                center: (*c).into(),
                radius: r,
            },
            albedo: spec.fruit_albedo,
            class_id: k as u32 + 1,
        });
    }
    Ok(Scene {
        primitives,
        light_direction: spec.light_direction,
        background_albedo: spec.background_albedo,
    })
}

/// Traces one primary ray per pixel center. RGB views have 3 channels,
/// masks 1.
pub fn ray_trace_view(scene: &Scene, camera: &CameraFrame, mode: &RenderMode) -> Image {
    let (w, h) = (camera.width(), camera.height());
    let channels = if matches!(mode, RenderMode::Rgb) { 3 } else { 1 };
    let rows: Vec<Vec<f32>> = (0..h)
        .into_par_iter()
        .map(|py| {
            let mut row = Vec::with_capacity(w as usize * channels);
            for px in 0..w {
                let c = scene.trace_pixel(camera, px, py, mode);
                row.extend_from_slice(&c[..channels]);
            }
            row
        })
        .collect();
    Image {
        width: w,
        height: h,
        channels,
        data: rows.concat(),
    }
}

const HIT_EPS: f64 = 1e-9;

fn intersect_sphere(o: &Vec3, d: &Vec3, center: &Vec3, radius: f64) -> Option<(f64, Vec3)> {
    let oc = o - center;
    let b = oc.dot(d);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t = if -b - s > HIT_EPS { -b - s } else { -b + s };
    if t <= HIT_EPS {
        return None;
    }
    let p = o + d * t;
    Some((t, (p - center) / radius))
}

fn intersect_cylinder(o: &Vec3, d: &Vec3, base: &Vec3, radius: f64, height: f64) -> Option<(f64, Vec3)> {
    let mut best: Option<(f64, Vec3)> = None;
    let mut consider = |t: f64, n: Vec3| {
        if t > HIT_EPS && best.map_or(true, |(bt, _)| t < bt) {
            best = Some((t, n));
        }
    };
    let (ox, oz) = (o.x - base.x, o.z - base.z);
    let a = d.x * d.x + d.z * d.z;
    if a > 1e-15 {
        let b = ox * d.x + oz * d.z;
        let c = ox * ox + oz * oz - radius * radius;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let s = disc.sqrt();
            for t in [(-b - s) / a, (-b + s) / a] {
                let y = o.y + t * d.y;
                if y >= base.y && y <= base.y + height {
                    let p = o + d * t;
                    consider(t, Vec3::new(p.x - base.x, 0.0, p.z - base.z) / radius);
                }
            }
        }
    }
    if d.y.abs() > 1e-15 {
        for (y, n) in [(base.y, -Vec3::y()), (base.y + height, Vec3::y())] {
            let t = (y - o.y) / d.y;
            let p = o + d * t;
            if (p.x - base.x).powi(2) + (p.z - base.z).powi(2) <= radius * radius {
                consider(t, n);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{look_at, Intrinsics};

    fn camera_at(eye: Vec3, target: Vec3, k: Intrinsics) -> CameraFrame {
        CameraFrame::new(look_at(eye, target, Vec3::y()).unwrap(), k, 0.5, 10.0).unwrap()
    }

    #[test]
    fn single_fruit_is_placed_inside_canopy() {
        let spec = OrchardSpec {
            fruit_count: 1,
            fruit_radius: 0.05,
            canopy_radius: 0.5,
            ..Default::default()
        };
        let scene = generate_orchard(&spec).unwrap();
        let fruits = scene.fruits();
        assert_eq!(fruits.len(), 1);
        assert!((fruits[0].0 - Vec3::from(spec.canopy_center)).norm() < spec.canopy_radius);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = OrchardSpec::default();
        assert_eq!(generate_orchard(&spec).unwrap(), generate_orchard(&spec).unwrap());
        let other = OrchardSpec { rng_seed: 8, ..spec.clone() };
        assert_ne!(generate_orchard(&spec).unwrap(), generate_orchard(&other).unwrap());
    }

    #[test]
    fn eight_fruits_are_pairwise_separated() {
        let spec = OrchardSpec::default();
        let scene = generate_orchard(&spec).unwrap();
        let fruits = scene.fruits();
        assert_eq!(fruits.len(), 8);
        for i in 0..fruits.len() {
            assert!((fruits[i].0 - Vec3::from(spec.canopy_center)).norm() < spec.canopy_radius);
            for j in 0..i {
                assert!((fruits[i].0 - fruits[j].0).norm() > 2.0 * spec.fruit_radius);
            }
        }
        // class ids are dense 0..=K
        let ids: BTreeSet<u32> = scene.primitives.iter().map(|p| p.class_id).collect();
        assert_eq!(ids, (0..=8).collect());
        assert_eq!(scene.primitives.len(), 9);
    }

    #[test]
    fn overfull_canopy_is_infeasible() {
        let spec = OrchardSpec {
            fruit_count: 200,
            ..Default::default()
        };
        assert!(matches!(generate_orchard(&spec), Err(Error::InfeasibleSpec(_))));
    }

    #[test]
    fn empty_scene_renders_background() {
        let scene = Scene::empty(0.5);
        let cam = camera_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Intrinsics::from_fov(8, 6, 40.0));
        let img = ray_trace_view(&scene, &cam, &RenderMode::Rgb);
        assert!(img.data.iter().all(|&v| v == 0.5));
    }

    fn lone_sphere(center: Vec3, radius: f64) -> Scene {
        Scene {
            primitives: vec![Primitive {
                shape: Shape::Sphere {
                    center: center.into(),
                    radius,
                },
                albedo: [1.0, 0.0, 0.0],
                class_id: 1,
            }],
            light_direction: [0.0, 1.0, 0.0],
            background_albedo: 0.5,
        }
    }

    #[test]
    fn centered_sphere_mask_is_centered() {
        let scene = lone_sphere(Vec3::zeros(), 0.3);
        let cam = camera_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Intrinsics::from_fov(64, 64, 40.0));
        let mask = ray_trace_view(&scene, &cam, &RenderMode::Mask([1].into()));
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 0..64 {
            for x in 0..64 {
                if mask.pixel(x, y)[0] > 0.5 {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1.0;
                }
            }
        }
        assert!(n > 0.0);
        assert!((sx / n - 32.0).abs() < 0.5 && (sy / n - 32.0).abs() < 0.5);
    }

    #[test]
    fn distant_sphere_pixel_area_matches_projection() {
        let (r, d) = (0.1, 8.0);
        let k = Intrinsics::from_fov(64, 64, 20.0);
        let scene = lone_sphere(Vec3::zeros(), r);
        let cam = camera_at(Vec3::new(0.0, 0.0, d), Vec3::zeros(), k);
        let mask = ray_trace_view(&scene, &cam, &RenderMode::Mask([1].into()));
        let count = mask.data.iter().filter(|&&v| v > 0.5).count() as f64;

        // brute-force oracle: 4x supersampled hit counting
        let hi = Intrinsics {
            fx: k.fx * 4.0,
            fy: k.fy * 4.0,
            cx: k.cx * 4.0,
            cy: k.cy * 4.0,
            width: 256,
            height: 256,
        };
        let cam_hi = camera_at(Vec3::new(0.0, 0.0, d), Vec3::zeros(), hi);
        let hits = ray_trace_view(&scene, &cam_hi, &RenderMode::Mask([1].into()))
            .data
            .iter()
            .filter(|&&v| v > 0.5)
            .count() as f64
            / 16.0;
        let analytic = std::f64::consts::PI * (k.fx * r / d).powi(2);
        assert!((hits - analytic).abs() / analytic < 0.1, "oracle {hits} vs analytic {analytic}");
        assert!((count - analytic).abs() / analytic < 0.1, "count {count} vs analytic {analytic}");
    }

    #[test]
    fn mask_agrees_with_rgb_hits_and_multiclass_levels_count_fruits() {
        let spec = OrchardSpec::default();
        let scene = generate_orchard(&spec).unwrap();
        let cam = camera_at(Vec3::new(0.0, 2.5, 3.0), Vec3::new(0.0, 0.2, 0.0), Intrinsics::from_fov(96, 96, 45.0));
        let targets: BTreeSet<u32> = (1..=8).collect();
        let mask = ray_trace_view(&scene, &cam, &RenderMode::Mask(targets.clone()));
        for py in 0..96 {
            for px in 0..96 {
                let dir = cam.direction_through(px as f64 + 0.5, py as f64 + 0.5);
                let fruit_hit = scene
                    .intersect(&cam.center(), &dir)
                    .is_some_and(|h| targets.contains(&scene.primitives[h.primitive].class_id));
                assert_eq!(mask.pixel(px, py)[0] == 1.0, fruit_hit);
            }
        }
        let levels = default_class_levels(8);
        let multi = ray_trace_view(&scene, &cam, &RenderMode::Multiclass(levels.clone()));
        let seen: BTreeSet<u32> = multi.data.iter().filter(|&&v| v > 0.0).map(|&v| (v * 8.0).round() as u32).collect();
        assert!(seen.iter().all(|k| (1..=8).contains(k)));
        assert!(seen.len() >= 6, "a top-down view sees most fruits: {seen:?}");
    }

    #[test]
    fn cylinder_is_hit_from_the_side_and_top() {
        let o = Vec3::new(0.0, 0.5, 5.0);
        let (t, n) = intersect_cylinder(&o, &-Vec3::z(), &Vec3::zeros(), 0.5, 1.0).unwrap();
        assert!((t - 4.5).abs() < 1e-12 && (n - Vec3::z()).norm() < 1e-12);
        let (t, n) = intersect_cylinder(&Vec3::new(0.1, 3.0, 0.0), &-Vec3::y(), &Vec3::zeros(), 0.5, 1.0).unwrap();
        assert!((t - 2.0).abs() < 1e-12 && (n - Vec3::y()).norm() < 1e-12);
    }
}
