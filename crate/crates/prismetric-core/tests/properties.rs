//! Randomised invariant checks across the core modules.

use nalgebra::Unit;
use prismetric_core::geometry::ReferencePrism;
use prismetric_core::mechanics::moving_average;
use prismetric_core::metrics::{chamfer, hausdorff};
use prismetric_core::projection::{node_coordinates, node_count};
use prismetric_core::register::{kabsch_step, RigidTransform};
use prismetric_core::sample::downsample_random;
use prismetric_core::{deviation, Point3, PointCloud, Vector3};
use proptest::prelude::*;

fn points(n: core::ops::Range<usize>) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(
        (-100.0f64..100.0, -100.0f64..100.0, -100.0f64..100.0),
        n,
    )
    .prop_map(|v| v.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect())
}

fn rigid() -> impl Strategy<Value = RigidTransform> {
    (
        (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
        -3.0f64..3.0,
        (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0),
    )
        .prop_map(|((ax, ay, az), angle, (tx, ty, tz))| {
            let rot = RigidTransform::rotation_about(Vector3::new(ax, ay, az), angle);
            RigidTransform::translation(Vector3::new(tx, ty, tz)).compose(&rot)
        })
}

fn rms(a: &[Point3], b: &[Point3]) -> f64 {
    let sum: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm_squared()).sum();
    (sum / a.len() as f64).sqrt()
}

proptest! {
    #[test]
    fn kabsch_inverts_any_rigid_motion(pts in points(4..40), t in rigid()) {
        // Skip degenerate (collinear) configurations: spread in 2+ directions.
        let source = PointCloud::new(pts);
        let moved = PointCloud::new(source.points.iter().map(|&p| t.apply_point(p)).collect());
        let recovered = kabsch_step(&source, &moved).unwrap();
        let placed: Vec<Point3> = source.points.iter().map(|&p| recovered.apply_point(p)).collect();
        prop_assert!(rms(&placed, &moved.points) < 1e-8);
    }

    #[test]
    fn transform_inverse_round_trips(p in points(1..8), t in rigid()) {
        let inv = t.inverse();
        for &q in &p {
            let back = inv.apply_point(t.apply_point(q));
            prop_assert!((back - q).norm() < 1e-9);
        }
        prop_assert!(t.compose(&inv).is_rigid(1e-9));
    }

    #[test]
    fn hausdorff_is_symmetric_and_bounds_chamfer_legs(a in points(1..60), b in points(1..60)) {
        let (ca, cb) = (PointCloud::new(a), PointCloud::new(b));
        let h_ab = hausdorff(&ca, &cb).unwrap();
        let h_ba = hausdorff(&cb, &ca).unwrap();
        prop_assert_eq!(h_ab, h_ba);
        let c = chamfer(&ca, &cb).unwrap();
        prop_assert!(c >= 0.0);
        // Each directed mean is at most the worst case, so chamfer ≤ 2·hausdorff.
        prop_assert!(c <= 2.0 * h_ab + 1e-12);
    }

    #[test]
    fn identical_clouds_have_zero_distance(a in points(1..60)) {
        let c = PointCloud::new(a);
        prop_assert_eq!(hausdorff(&c, &c).unwrap(), 0.0);
        prop_assert_eq!(chamfer(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn downsample_returns_a_subset_in_input_order(a in points(1..120), target in 1usize..140, seed in any::<u64>()) {
        let cloud = PointCloud::new(a);
        let down = downsample_random(&cloud, target, seed).unwrap();
        prop_assert_eq!(down.len(), cloud.len().min(target));
        // Every retained point appears in the original, in ascending index order.
        let mut cursor = 0;
        for p in &down.points {
            let found = cloud.points[cursor..].iter().position(|q| q == p);
            prop_assert!(found.is_some());
            cursor += found.unwrap() + 1;
        }
        let again = downsample_random(&cloud, target, seed).unwrap();
        prop_assert_eq!(down.points, again.points);
    }

    #[test]
    fn mesh_sign_matches_box_containment(
        x in -20.0f64..180.0, y in -20.0f64..60.0, z in -20.0f64..60.0,
    ) {
        let prism = ReferencePrism::standard();
        let mesh = prism.to_mesh();
        let sdf = deviation::SignedDistance::new(&mesh).unwrap();
        let p = Point3::new(x, y, z);
        // Stay off the surface, where the sign convention is a tie-break.
        prop_assume!(prism.signed_distance(p).abs() > 1e-6);
        prop_assert_eq!(sdf.contains(p), prism.contains(p));
        prop_assert_eq!(sdf.eval(p) > 0.0, !prism.contains(p));
    }

    #[test]
    fn box_distance_agrees_with_nearest_face_rectangle(
        x in -20.0f64..180.0, y in -20.0f64..60.0, z in -20.0f64..60.0,
    ) {
        let prism = ReferencePrism::standard();
        let p = Point3::new(x, y, z);
        let nearest = prismetric_core::FaceLabel::ALL
            .iter()
            .map(|&f| prism.distance_to_face_rect(f, p))
            .fold(f64::INFINITY, f64::min);
        prop_assert!((prism.signed_distance(p).abs() - nearest).abs() < 1e-9);
    }

    #[test]
    fn rotation_preserves_pairwise_distances(pts in points(2..30), t in rigid()) {
        let moved: Vec<Point3> = pts.iter().map(|&p| t.apply_point(p)).collect();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let before = (pts[i] - pts[j]).norm();
                let after = (moved[i] - moved[j]).norm();
                prop_assert!((before - after).abs() < 1e-8 * (1.0 + before));
            }
        }
    }

    #[test]
    fn moving_average_stays_within_bounds(v in prop::collection::vec(-50.0f64..50.0, 1..80), w in 1usize..12) {
        let smoothed = moving_average(&v, w);
        prop_assert_eq!(smoothed.len(), v.len());
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for &s in &smoothed {
            prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
        }
    }

    #[test]
    fn grid_nodes_cover_the_face_interior(dim in 0.5f64..200.0, spacing in 0.1f64..10.0) {
        let n = node_count(dim, spacing);
        let coords = node_coordinates(dim, spacing);
        prop_assert_eq!(coords.len(), n);
        prop_assert!(n >= 1);
        // Cells are spacing-wide except the last, truncated at the edge.
        for pair in coords.windows(2) {
            let gap = pair[1] - pair[0];
            prop_assert!(gap > 0.0 && gap <= spacing + 1e-12);
        }
        prop_assert!(coords[0] > 0.0 && coords[n - 1] < dim);
    }
}

#[test]
fn unit_axis_rotation_is_exact() {
    let t = RigidTransform::rotation_about(Vector3::z(), core::f64::consts::FRAC_PI_2);
    let p = t.apply_point(Point3::new(1.0, 0.0, 0.0));
    assert!((p - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    let axis = Unit::new_normalize(Vector3::new(1.0, 1.0, 1.0));
    let t2 = RigidTransform::rotation_about(axis.into_inner(), 2.0 * core::f64::consts::PI);
    assert!(t2.is_rigid(1e-12));
    let q = Point3::new(3.0, -2.0, 5.0);
    assert!((t2.apply_point(q) - q).norm() < 1e-9);
}
