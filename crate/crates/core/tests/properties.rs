use nalgebra::Vector3;
use proptest::prelude::*;
use refilm_core::eval::{iou, mpjpe, pixel_accuracy, quantize_labels};
use refilm_core::geom::{exp_screw, project_camera_point, skew_na, Intrinsics, Projection, ScrewParams};
use refilm_core::scene::{lift_tracks_to_world, max_joint_displacement, tracks_to_camera};
use refilm_core::synth::{make_shot, ShotSpec, ShotType};
use refilm_core::{ColorMaskImage, FrameOfReference, RigidTransform};

fn vec3(r: f64) -> impl Strategy<Value = [f64; 3]> {
    [-r..r, -r..r, -r..r]
}

fn axis() -> impl Strategy<Value = [f64; 3]> {
    vec3(1.0).prop_filter("nonzero axis", |w| w.iter().map(|x| x * x).sum::<f64>() > 1e-4)
}

fn transform() -> impl Strategy<Value = RigidTransform> {
    (-3.0..3.0f64, axis(), vec3(2.0)).prop_map(|(t, w, v)| exp_screw(&ScrewParams::new(t, w, v)))
}

fn labels_image(w: u32, h: u32) -> impl Strategy<Value = ColorMaskImage> {
    const COLORS: [[f64; 3]; 3] = [[1.0, 1.0, 1.0], [0.9, 0.1, 0.1], [0.1, 0.3, 0.9]];
    proptest::collection::vec(0usize..3, (w * h) as usize)
        .prop_map(move |ls| ColorMaskImage::from_pixels(w, h, ls.iter().map(|&l| COLORS[l]).collect()).unwrap())
}

const PALETTE: [[f64; 3]; 2] = [[0.9, 0.1, 0.1], [0.1, 0.3, 0.9]];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exp_screw_is_a_rotation(theta in -10.0..10.0f64, w in axis(), v in vec3(5.0)) {
        let a = exp_screw(&ScrewParams::new(theta, w, v));
        prop_assert!(a.orthogonality_error() <= 1e-9);
        prop_assert!((a.rotation().determinant() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn inverse_undoes_compose(a in transform(), b in transform()) {
        let id = RigidTransform::identity();
        prop_assert!(a.compose(&a.inverse()).distance(&id) < 1e-9);
        let ab = a.compose(&b);
        prop_assert!((ab.matrix() - a.matrix() * b.matrix()).abs().max() < 1e-12);
        prop_assert!(ab.inverse().distance(&b.inverse().compose(&a.inverse())) < 1e-9);
    }

    #[test]
    fn screws_add_along_a_fixed_axis(t1 in -2.0..2.0f64, t2 in -2.0..2.0f64, w in axis(), v in vec3(2.0)) {
        let rot = |t| exp_screw(&ScrewParams::new(t, w, [0.0; 3]));
        prop_assert!(rot(t1).compose(&rot(t2)).distance(&rot(t1 + t2)) < 1e-9);
        let tr = |t| exp_screw(&ScrewParams::new(t, [0.0; 3], v));
        prop_assert!(tr(t1).compose(&tr(t2)).distance(&tr(t1 + t2)) < 1e-9);
    }

    #[test]
    fn skew_is_the_cross_product(w in vec3(3.0), x in vec3(3.0)) {
        let (w, x) = (Vector3::from(w), Vector3::from(x));
        let m = skew_na(&w);
        prop_assert!((m + m.transpose()).abs().max() == 0.0);
        prop_assert!((m * x - w.cross(&x)).norm() < 1e-12);
    }

    #[test]
    fn projection_ignores_depth_scale(q in vec3(2.0), z in 0.1..20.0f64, s in 0.1..10.0f64) {
        let k = Intrinsics::new(100.0, 90.0, 64.0, 60.0, 128, 120).unwrap();
        let a = project_camera_point(&[q[0], q[1], z], &k);
        let b = project_camera_point(&[s * q[0], s * q[1], s * z], &k);
        prop_assert!((a.pixel[0] - b.pixel[0]).abs() < 1e-9 && (a.pixel[1] - b.pixel[1]).abs() < 1e-9);
        prop_assert_eq!(a.visible, b.visible);
    }

    #[test]
    fn iou_is_symmetric_and_pa_detects_identity(a in labels_image(6, 5), b in labels_image(6, 5)) {
        prop_assert_eq!(iou(&a, &b, &PALETTE).unwrap(), iou(&b, &a, &PALETTE).unwrap());
        let same = quantize_labels(&a, &PALETTE) == quantize_labels(&b, &PALETTE);
        prop_assert_eq!(pixel_accuracy(&a, &b, &PALETTE).unwrap() == 100.0, same);
        prop_assert_eq!(iou(&a, &b, &PALETTE).unwrap() == 1.0, same);
        let p = pixel_accuracy(&a, &b, &PALETTE).unwrap();
        prop_assert!((0.0..=100.0).contains(&p));
    }

    #[test]
    fn mpjpe_is_translation_equivariant(pts in proptest::collection::vec((vec3(50.0), vec3(50.0)), 1..12), d in vec3(30.0)) {
        let wrap = |v: Vec<Projection>| vec![v];
        let at = |p: [f64; 3], off: [f64; 3]| Projection { pixel: [p[0] + off[0], p[1] + off[1]], visible: true };
        let a = wrap(pts.iter().map(|(p, _)| at(*p, [0.0; 3])).collect());
        let b = wrap(pts.iter().map(|(_, q)| at(*q, [0.0; 3])).collect());
        let a2 = wrap(pts.iter().map(|(p, _)| at(*p, d)).collect());
        let b2 = wrap(pts.iter().map(|(_, q)| at(*q, d)).collect());
        let (x, y) = (mpjpe(&a, &b).unwrap().unwrap(), mpjpe(&a2, &b2).unwrap().unwrap());
        prop_assert!((x - y).abs() < 1e-9 * (1.0 + x));
        prop_assert!(x >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lift_round_trips_and_is_equivariant(seed in 0u64..1000, poses in proptest::collection::vec(transform(), 3), g in transform()) {
        let shot = make_shot(&ShotSpec::new(ShotType::Track, 3, 2, seed)).unwrap();
        let cam = tracks_to_camera(&shot.scene_world, &poses).unwrap();
        prop_assert_eq!(cam.frame_of_reference(), FrameOfReference::Camera);
        let world = lift_tracks_to_world(&cam, &poses).unwrap();
        prop_assert!(max_joint_displacement(&world, &shot.scene_world).unwrap() <= 1e-9);

        // pre-composing every pose with g moves the lifted world by g^-1
        let moved: Vec<RigidTransform> = poses.iter().map(|c| c.compose(&g)).collect();
        let lifted = lift_tracks_to_world(&cam, &moved).unwrap();
        let expected = shot.scene_world.transformed(&vec![g.inverse(); 3], FrameOfReference::World).unwrap();
        prop_assert!(max_joint_displacement(&lifted, &expected).unwrap() <= 1e-9);
    }
}
