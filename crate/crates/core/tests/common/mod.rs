//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

pub mod roundtrip;

use std::collections::BTreeMap;

use nerfseg::analytic::GaussianBump;
use nerfseg::field::{FieldConfig, FieldParams, HeadType};
use nerfseg::render::{render_with_tape, Ray, RenderConfig};
use nerfseg::train::{loss_joint_with_grad, loss_rgb_with_grad};
use nerfseg::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tiny field used by every gradient check.
pub fn tiny_config(head_type: HeadType) -> FieldConfig {
    FieldConfig {
        trunk_width: 8,
        trunk_depth: 2,
        head_type,
        ..FieldConfig::default()
    }
}

pub struct GradProbe {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradProbe {
    pub fn rel_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.numeric.abs().max(1e-8)
    }
}

/// Rays through the unit cube and random targets for a rendered loss.
pub fn probe_batch(seed: u64, rays: usize) -> (Vec<Ray>, Vec<[f64; 3]>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..rays {
        let origin = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 2.5);
        let target = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), 0.0);
        out.push(Ray {
            origin,
            dir: (target - origin).normalize(),
            near: 1.0,
            far: 4.0,
        });
    }
    let colors = (0..rays).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let masks = (0..rays).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect();
    (out, colors, masks)
}

fn rendered_loss(
    params: &FieldParams<f64>,
    rays: &[Ray],
    config: &RenderConfig,
    colors: &[[f64; 3]],
    masks: &[f64],
) -> f64 {
    let tape = render_with_tape(params, rays, config, None);
    match &tape.masks {
        Some(m) => loss_joint_with_grad(&tape.colors, colors, m, masks, 1.0).unwrap().0,
        None => loss_rgb_with_grad(&tape.colors, colors).unwrap().0,
    }
}

/// Analytic gradient of the rendered loss against a central difference
/// with step `h`, at `coords` random parameter coordinates, all in f64.
pub fn gradient_probes(head_type: HeadType, seed: u64, coords: usize, h: f64) -> Vec<GradProbe> {
    let params = FieldParams::<f64>::init(tiny_config(head_type), seed).unwrap();
    let (rays, colors, masks) = probe_batch(seed ^ 0x5eed, 4);
    let config = RenderConfig {
        samples_per_ray: 16,
        jitter: false,
        background: [0.5; 3],
    };
    let tape = render_with_tape(&params, &rays, &config, None);
    let (d_color, d_mask) = match &tape.masks {
        Some(m) => {
            let (_, dc, dm) = loss_joint_with_grad(&tape.colors, &colors, m, &masks, 1.0).unwrap();
            (dc, Some(dm))
        }
        None => (loss_rgb_with_grad(&tape.colors, &colors).unwrap().1, None),
    };
    let mut grad = vec![0.0; params.len()];
    tape.backward(&params, &d_color, d_mask.as_deref(), &mut grad).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31) + 7);
    (0..coords)
        .map(|_| {
            let index = rng.gen_range(0..params.len());
            let mut plus = params.clone();
            plus.values[index] += h;
            let mut minus = params.clone();
            minus.values[index] -= h;
            let numeric = (rendered_loss(&plus, &rays, &config, &colors, &masks)
                - rendered_loss(&minus, &rays, &config, &colors, &masks))
                / (2.0 * h);
            GradProbe {
                index,
                analytic: grad[index],
                numeric,
            }
        })
        .collect()
}

/// Continuous rendering integral of a Gaussian bump along `ray`, by a
/// left Riemann sum with `steps` cells and an exact running optical depth.
pub fn riemann_reference(bump: &GaussianBump, ray: &Ray, background: [f64; 3], steps: usize) -> [f64; 3] {
    let dt = (ray.far - ray.near) / steps as f64;
    let mut depth = 0.0;
    let mut opacity = 0.0;
    for i in 0..steps {
        let t = ray.near + (i as f64 + 0.5) * dt;
        let sigma = bump.density_at(&ray.at(t));
        // T(t) at the cell centre from the depth accumulated so far
        let transmittance = (-(depth + 0.5 * sigma * dt)).exp();
        opacity += transmittance * sigma * dt;
        depth += sigma * dt;
    }
    let residual = (-depth).exp();
    let mut c = [0.0; 3];
    for k in 0..3 {
        c[k] = opacity * bump.color[k] as f64 + residual * background[k];
    }
    c
}

/// O(n^2) DBSCAN: core points are those with at least `min_pts` points
/// (self included) within `eps`; clusters are connected components of the
/// core graph named by their smallest index; a border point joins the
/// lowest-named cluster among its core neighbours.
pub fn dbscan_oracle(points: &[Vec3], eps: f64, min_pts: usize) -> Vec<i64> {
    let n = points.len();
    let near = |i: usize, j: usize| (points[i] - points[j]).norm_squared() <= eps * eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..i {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                let (lo, hi) = (a.min(b), a.max(b));
                parent[hi] = lo;
            }
        }
    }
    let root: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut ids = vec![-1i64; n];
    for i in 0..n {
        if core[i] {
            ids[i] = root[i] as i64;
        }
    }
    for i in 0..n {
        if !core[i] {
            ids[i] = (0..n)
                .filter(|&j| core[j] && near(i, j))
                .map(|j| root[j] as i64)
                .min()
                .unwrap_or(-1);
        }
    }
    ids
}

/// Relabels ids by order of first appearance so partitions compare
/// directly; noise stays −1.
pub fn canonical(ids: &[i64]) -> Vec<i64> {
    let mut map = BTreeMap::new();
    ids.iter()
        .map(|&i| {
            if i < 0 {
                -1
            } else {
                let next = map.len() as i64;
                *map.entry(i).or_insert(next)
            }
        })
        .collect()
}

/// Within-cluster sum of squared deviations of a labelling.
pub fn within_ss(points: &[Vec3], labels: &[usize]) -> f64 {
    let mut groups: BTreeMap<usize, Vec<Vec3>> = BTreeMap::new();
    for (p, &l) in points.iter().zip(labels) {
        groups.entry(l).or_default().push(*p);
    }
    groups
        .values()
        .map(|g| {
            let c = g.iter().sum::<Vec3>() / g.len() as f64;
            g.iter().map(|p| (p - c).norm_squared()).sum::<f64>()
        })
        .sum()
}

/// Minimum-variance 2-partition by enumerating every bipartition.
pub fn best_two_partition(points: &[Vec3]) -> Vec<usize> {
    let n = points.len();
    let mut best = (f64::INFINITY, vec![0; n]);
    // point 0 is fixed in group 0, so each partition is visited once
    for mask in 1u64..(1 << (n - 1)) {
        let labels: Vec<usize> = (0..n).map(|i| if i > 0 && mask >> (i - 1) & 1 == 1 { 1 } else { 0 }).collect();
        let ss = within_ss(points, &labels);
        if ss < best.0 {
            best = (ss, labels);
        }
    }
    best.1
}

/// True when two labellings describe the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let ai: Vec<i64> = a.iter().map(|&x| x as i64).collect();
    let bi: Vec<i64> = b.iter().map(|&x| x as i64).collect();
    canonical(&ai) == canonical(&bi)
}

/// Random cloud of a few Gaussian blobs plus uniform clutter.
pub fn blob_cloud(rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
    let blobs = rng.gen_range(1..=4);
    let centers: Vec<Vec3> = (0..blobs)
        .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.8) {
                let c = centers[rng.gen_range(0..blobs)];
                c + Vec3::new(rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15))
            } else {
                Vec3::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2))
            }
        })
        .collect()
}
