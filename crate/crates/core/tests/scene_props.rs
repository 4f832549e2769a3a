use std::collections::BTreeSet;

use nerfseg::camera::{look_at, RingSpec};
use nerfseg::scene::{generate_orchard, ray_trace_view, Primitive, RenderMode, Shape};
use nerfseg::synth::{synthesize, CameraRig};
use nerfseg::{make_ring_poses, CameraFrame, Error, Intrinsics, OrchardSpec, Scene, Vec3};
use proptest::prelude::*;

/// First positive root of |o + t d - c| = r, when the ray meets the sphere.
fn sphere_hit(o: &Vec3, d: &Vec3, c: &Vec3, r: f64) -> Option<f64> {
    let oc = o - c;
    let b = oc.dot(d);
    let disc = b * b - (oc.norm_squared() - r * r);
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    [-b - s, -b + s].into_iter().find(|&t| t > 0.0)
}

fn spheres_only(centers: &[Vec3], r: f64) -> Scene {
    let mut s = Scene::empty(0.5);
    for (i, c) in centers.iter().enumerate() {
        s.primitives.push(Primitive {
            shape: Shape::Sphere {
                center: [c.x, c.y, c.z],
                radius: r,
            },
            albedo: [0.8, 0.2, 0.1],
            class_id: i as u32 + 1,
        });
    }
    s
}

#[test]
fn crowded_canopy_is_reported_as_infeasible() {
    let spec = OrchardSpec {
        fruit_count: 40,
        canopy_radius: 0.5,
        ..OrchardSpec::default()
    };
    assert!(matches!(generate_orchard(&spec), Err(Error::InfeasibleSpec(_))));
}

#[test]
fn synthesized_frames_share_cameras_across_modes() {
    let rig = CameraRig {
        n_views: 3,
        width: 8,
        height: 8,
        ..CameraRig::default()
    };
    let out = synthesize(&OrchardSpec::default(), &rig).unwrap();
    for ((a, b), c) in out.rgb.frames.iter().zip(&out.mask.frames).zip(&out.multiclass.frames) {
        assert_eq!(a.camera, b.camera);
        assert_eq!(a.camera, c.camera);
    }
    assert_eq!(out.scene.fruit_count(), 8);
    assert_eq!(out.multiclass.class_levels.len(), 8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn orchards_respect_their_invariants(seed in any::<u64>(), k in 1usize..10, radius in 0.08f64..0.2) {
        let spec = OrchardSpec { fruit_count: k, fruit_radius: radius, rng_seed: seed, ..OrchardSpec::default() };
        let scene = match generate_orchard(&spec) {
            Ok(s) => s,
            Err(Error::InfeasibleSpec(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let fruits = scene.fruits();
        prop_assert_eq!(fruits.len(), k);
        let ids: BTreeSet<u32> = scene.primitives.iter().map(|p| p.class_id).collect();
        prop_assert_eq!(ids, (0..=k as u32).collect::<BTreeSet<_>>());
        let canopy = Vec3::from(spec.canopy_center);
        for (i, (a, ra)) in fruits.iter().enumerate() {
            prop_assert!((a - canopy).norm() <= spec.canopy_radius);
            prop_assert_eq!(*ra, radius);
            for (b, _) in &fruits[..i] {
                prop_assert!((a - b).norm() > 2.0 * radius);
            }
        }
        prop_assert_eq!(generate_orchard(&spec).unwrap(), scene);
    }

    #[test]
    fn ring_poses_are_rigid_and_aimed(n in 2usize..24, radius in 1.0f64..5.0, height in -1.0f64..2.0, offset in 0.0f64..360.0) {
        let k = Intrinsics::from_fov(40, 30, 50.0);
        let ring = RingSpec { n_views: n, radius, height, lookat: [0.1, 0.0, -0.2], azimuth_offset_deg: offset };
        let poses = make_ring_poses(&ring, k, 0.5, 6.0).unwrap();
        prop_assert_eq!(poses.len(), n);
        for p in &poses {
            let r = p.rotation();
            prop_assert!((r.transpose() * r - nalgebra::Matrix3::identity()).norm() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
            let (u, v) = p.project(&Vec3::new(0.1, 0.0, -0.2)).unwrap();
            prop_assert!((u - k.cx).abs() < 1e-6 && (v - k.cy).abs() < 1e-6);
            prop_assert!((p.center().y - height).abs() < 1e-12);
        }
    }

    #[test]
    fn masks_match_an_independent_sphere_tracer(seed in any::<u64>(), k in 1usize..5) {
        let spec = OrchardSpec { fruit_count: k, rng_seed: seed, ..OrchardSpec::default() };
        let Ok(orchard) = generate_orchard(&spec) else { return Ok(()) };
        let fruits = orchard.fruits();
        let centers: Vec<Vec3> = fruits.iter().map(|f| f.0).collect();
        let scene = spheres_only(&centers, spec.fruit_radius);
        let pose = look_at(Vec3::new(0.4, 1.0, 2.6), Vec3::from(spec.canopy_center), Vec3::y()).unwrap();
        let cam = CameraFrame::new(pose, Intrinsics::from_fov(24, 24, 50.0), 0.5, 5.0).unwrap();
        let levels: Vec<f32> = (1..=k).map(|i| i as f32 / k as f32).collect();
        let mask = ray_trace_view(&scene, &cam, &RenderMode::Mask((1..=k as u32).collect()));
        let multi = ray_trace_view(&scene, &cam, &RenderMode::Multiclass(levels.clone()));
        let rgb = ray_trace_view(&scene, &cam, &RenderMode::Rgb);
        for py in 0..24 {
            for px in 0..24 {
                let d = cam.direction_through(px as f64 + 0.5, py as f64 + 0.5).normalize();
                let nearest = centers
                    .iter()
                    .enumerate()
                    .filter_map(|(i, c)| sphere_hit(&cam.center(), &d, c, spec.fruit_radius).map(|t| (t, i)))
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                let want_mask = if nearest.is_some() { 1.0 } else { 0.0 };
                let want_level = nearest.map_or(0.0, |(_, i)| levels[i]);
                prop_assert_eq!(mask.pixel(px, py)[0], want_mask);
                prop_assert_eq!(multi.pixel(px, py)[0], want_level);
                if nearest.is_none() {
                    prop_assert!(rgb.pixel(px, py).iter().all(|&c| c == 0.5));
                }
            }
        }
    }
}
