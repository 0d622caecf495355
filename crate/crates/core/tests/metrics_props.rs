mod common;

use proptest::prelude::*;

use common::cloud;
use spinecomp::geometry::{apply_transform, vec3, Point3, RigidTransform};
use spinecomp::index::SpatialIndex;
use spinecomp::metrics::{
    chamfer, chamfer_split, emd_approx, emd_exact, fscore, pearson, snr, voxel_iou,
};

fn points(max: usize) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 1..=max)
}

fn pair(max: usize) -> impl Strategy<Value = (Vec<Point3>, Vec<Point3>)> {
    (1..=max).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), n),
            prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), n),
        )
    })
}

fn rigid() -> impl Strategy<Value = RigidTransform> {
    (prop::array::uniform3(0.1f64..1.0), -3.1f64..3.1, prop::array::uniform3(-100.0f64..100.0))
        .prop_map(|(axis, angle, t)| RigidTransform::from_axis_angle(axis, angle, t))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn mean_nn(from: &[Point3], to: &[Point3]) -> f64 {
    from.iter()
        .map(|p| to.iter().map(|q| vec3::dist(*p, *q)).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / from.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn chamfer_is_symmetric_and_nonnegative(a in points(30), b in points(30)) {
        let (a, b) = (cloud(&a), cloud(&b));
        let ab = chamfer(&a, &b).unwrap();
        prop_assert_eq!(ab.cd, chamfer(&b, &a).unwrap().cd);
        prop_assert!(ab.cd >= 0.0);
        prop_assert_eq!(chamfer(&a, &a).unwrap().cd, 0.0);
    }

    #[test]
    fn metrics_are_rigid_invariant((a, b) in pair(12), t in rigid()) {
        let (a, b) = (cloud(&a), cloud(&b));
        let (ta, tb) = (apply_transform(&t, &a), apply_transform(&t, &b));
        prop_assert!(rel_close(chamfer(&a, &b).unwrap().cd, chamfer(&ta, &tb).unwrap().cd, 1e-9));
        prop_assert!(rel_close(emd_exact(&a, &b).unwrap().emd, emd_exact(&ta, &tb).unwrap().emd, 1e-9));
        let (s, st) = (snr(&a, &b).unwrap().snr_db, snr(&ta, &tb).unwrap().snr_db);
        prop_assert!(s == st || rel_close(s, st, 1e-9));
    }

    #[test]
    fn fscore_is_monotone_and_bounded(a in points(30), b in points(30), t in 0.1f64..50.0, dt in 0.0f64..50.0) {
        let (a, b) = (cloud(&a), cloud(&b));
        let lo = fscore(&a, &b, t).unwrap();
        let hi = fscore(&a, &b, t + dt).unwrap();
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(lo <= hi);
    }

    #[test]
    fn emd_dominates_nearest_neighbour_means((a, b) in pair(10)) {
        let e = emd_exact(&cloud(&a), &cloud(&b)).unwrap();
        prop_assert!(e.emd + 1e-9 >= mean_nn(&a, &b));
        prop_assert!(e.emd + 1e-9 >= mean_nn(&b, &a));
        let mut seen = e.assignment.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..a.len()).collect::<Vec<_>>());
    }

    #[test]
    fn emd_approx_brackets_exact((a, b) in pair(24)) {
        let (a, b) = (cloud(&a).scaled(0.01), cloud(&b).scaled(0.01));
        let exact = emd_exact(&a, &b).unwrap().emd;
        let approx = emd_approx(&a, &b, 1e-3).unwrap().emd;
        prop_assert!(approx >= exact - 1e-12);
        prop_assert!(approx <= exact + 1e-3);
    }

    #[test]
    fn voxel_iou_is_symmetric_and_bounded(a in points(30), b in points(30), v in 0.5f64..20.0) {
        let (a, b) = (cloud(&a), cloud(&b));
        let ab = voxel_iou(&a, &b, v).unwrap();
        prop_assert_eq!(ab, voxel_iou(&b, &a, v).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(voxel_iou(&a, &a, v).unwrap(), 1.0);
    }

    #[test]
    fn split_fractions_are_consistent(a in points(30), b in points(30), p in points(10), tau in 1.0f64..40.0) {
        let (a, b, p) = (cloud(&a), cloud(&b), cloud(&p));
        let s = chamfer_split(&a, &b, &p, tau).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.visible_fraction));
        prop_assert!(s.cd_top.is_some() || s.cd_bottom.is_some());
        for v in [s.cd_top, s.cd_bottom].into_iter().flatten() {
            prop_assert!(v >= 0.0 && v.is_finite());
        }
    }

    #[test]
    fn pearson_is_affine_invariant(
        xy in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
        scale in 0.1f64..10.0,
        shift in -50.0f64..50.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let Ok(r) = pearson(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            let x2: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
            prop_assert!((pearson(&x2, &y).unwrap() - r).abs() < 1e-9);
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            prop_assert!((pearson(&x, &neg).unwrap() + r).abs() < 1e-9);
        }
    }

    #[test]
    fn knn_matches_linear_scan(pts in points(60), q in prop::array::uniform3(-60.0f64..60.0), k in 1usize..8) {
        let k = k.min(pts.len());
        let index = SpatialIndex::build(&pts);
        let got: Vec<f64> = index.knn(q, k).unwrap().iter().map(|n| n.distance()).collect();
        let mut all: Vec<f64> = pts.iter().map(|p| vec3::dist(*p, q)).collect();
        all.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&all[..k]) {
            prop_assert!((g - e).abs() < 1e-12);
        }
        prop_assert_eq!(got.len(), k);
    }
}
