use nalgebra::{Point3, Vector3};
use proptest::prelude::*;

use far_core::boxes::{Box3D, RangeBox};
use far_core::denoise::{negative_offset_from_angle, positive_offset_from_unit, NoiseForm, NoiseSpec};
use far_core::depth::{expected_depth, BinSpacing, DepthBinConfig};
use far_core::geometry::{CameraRig, Pixel};
use far_core::metrics::{average_precision, hungarian, recall_at, Band, ScoredBox};
use far_core::query::{generate_adaptive_queries, DepthSource, Detection2D, EmbedParams};
use far_core::sim::query_coverage;
use far_core::temporal::{ego_compensate, EgoMotion};

fn car(x: f64, y: f64) -> Box3D {
    Box3D::new(Point3::new(x, y, 0.8), [1.9, 4.6, 1.7], 0.0, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn visible_points_project_back(x in -140.0..140.0f64, y in -140.0..140.0f64, z in -2.0..4.0f64) {
        let rig = CameraRig::default_ring();
        let p = Point3::new(x, y, z);
        for hit in rig.visible_views(&p) {
            let q = rig.unproject_pixel(hit.pixel, hit.depth).unwrap();
            prop_assert!((q - p).norm() <= 1e-9 * p.coords.norm().max(1.0));
        }
    }

    #[test]
    fn bins_are_monotone(d1 in 1.0..153.0f64, d2 in 1.0..153.0f64, n in 2usize..128, log in any::<bool>()) {
        let spacing = if log { BinSpacing::LogUniform } else { BinSpacing::Uniform };
        let cfg = DepthBinConfig::new(1.0, 153.0, n, spacing).unwrap();
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(cfg.depth_to_bin(lo).unwrap() <= cfg.depth_to_bin(hi).unwrap());
        let c = cfg.centers();
        if (c[0]..=c[n - 1]).contains(&d1) {
            prop_assert!((expected_depth(&cfg.soft_label(d1).unwrap(), &cfg).unwrap() - d1).abs() < 1e-9);
        }
    }

    #[test]
    fn adaptive_queries_sit_on_their_rays(u in 10.0..950.0f64, v in 10.0..630.0f64, d in 2.0..150.0f64, view in 0usize..7) {
        let rig = CameraRig::default_ring();
        let bins = DepthBinConfig::default();
        let params = EmbedParams::random(16, 2, 4, 8, Default::default(), 1);
        let det = Detection2D::new(view, [u - 5.0, v - 5.0, u + 5.0, v + 5.0], 0.9, 0, vec![0.1; 4]).unwrap();
        let depths = vec![bins.soft_label(d).unwrap()];
        let qs = generate_adaptive_queries(&[det], &depths, &rig, &bins, &params, 0.1, DepthSource::Decoded).unwrap();
        let expected = rig.unproject_pixel(Pixel::new(view, u, v), expected_depth(&depths[0], &bins).unwrap()).unwrap();
        if !RangeBox::default().contains(&expected) {
            prop_assert!(qs.is_empty());
        } else {
            prop_assert_eq!(qs.len(), 1);
            prop_assert!((qs[0].ref_point - expected).norm() < 1e-9 * expected.coords.norm().max(1.0));
        }
    }

    #[test]
    fn positives_stay_inside(
        u in prop::array::uniform3(-0.999_999..0.999_999f64),
        size in prop::array::uniform3(0.1..20.0f64),
        yaw in -10.0..10.0f64,
    ) {
        let b = Box3D::new(Point3::new(30.0, -12.0, 1.0), size, yaw, 0).unwrap();
        prop_assert!(b.contains(&(b.center + positive_offset_from_unit(&b, u))));
    }

    #[test]
    fn negatives_grow_with_range(r1 in 0.0..150.0f64, r2 in 0.0..150.0f64, theta in 0.0..6.3f64) {
        let spec = NoiseSpec { form: NoiseForm::Log, ..NoiseSpec::default() };
        let m = |r: f64| negative_offset_from_angle(&Point3::new(r, 0.0, 0.5), &spec, theta).norm();
        if r1 < r2 {
            prop_assert!(m(r1) <= m(r2));
        }
        prop_assert_eq!(negative_offset_from_angle(&Point3::new(r1, 0.0, 0.5), &spec, theta).z, 0.0);
    }

    #[test]
    fn hungarian_beats_identity(cost in prop::collection::vec(prop::collection::vec(0.0..50.0f64, 5), 5)) {
        let a = hungarian(&cost).unwrap();
        let identity: f64 = (0..5).map(|i| cost[i][i]).sum();
        prop_assert!(a.total_cost <= identity + 1e-9);
        let mut cols: Vec<usize> = a.pairs.iter().map(|p| p.1).collect();
        cols.sort();
        prop_assert_eq!(cols, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn recall_and_ap_are_bounded(
        gts in prop::collection::vec((0.0..30.0f64, 0.0..30.0f64), 0..12),
        preds in prop::collection::vec((0.0..30.0f64, 0.0..30.0f64, 0.0..1.0f64), 0..15),
    ) {
        let gts: Vec<Box3D> = gts.iter().map(|&(x, y)| car(x, y)).collect();
        let preds: Vec<ScoredBox> = preds.iter().map(|&(x, y, score)| ScoredBox { bbox: car(x, y), score }).collect();
        let r = recall_at(&preds, &gts, &[1.0, 2.0, 4.0]).unwrap();
        prop_assert!(r.windows(2).all(|w| w[0].recall <= w[1].recall + 1e-12));
        for t in [1.0, 2.0, 4.0] {
            let ap = average_precision(&preds, &gts, t).unwrap().ap;
            prop_assert!((0.0..=1.0).contains(&ap));
        }
    }

    #[test]
    fn coverage_matches_nearest_point_oracle(
        pts in prop::collection::vec((-60.0..60.0f64, -60.0..60.0f64), 0..30),
        gts in prop::collection::vec((-60.0..60.0f64, -60.0..60.0f64), 1..20),
    ) {
        let points: Vec<Point3<f64>> = pts.iter().map(|&(x, y)| Point3::new(x, y, 0.8)).collect();
        let boxes: Vec<Box3D> = gts.iter().map(|&(x, y)| car(x, y)).collect();
        let band = Band::new(0.0, 150.0);
        let cov = query_coverage(std::slice::from_ref(&points), std::slice::from_ref(&boxes), &[band], &[1.0, 5.0]).unwrap();
        for (i, t) in [1.0, 5.0].iter().enumerate() {
            let hits = boxes
                .iter()
                .filter(|b| points.iter().any(|p| (p - b.center).norm() <= *t))
                .count();
            prop_assert!((cov[0].recall[i] - hits as f64 / boxes.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn ego_compensation_is_rigid(
        a in prop::array::uniform3(-50.0..50.0f64),
        b in prop::array::uniform3(-50.0..50.0f64),
        fwd in -3.0..3.0f64, yaw in -0.3..0.3f64,
    ) {
        let params = EmbedParams::random(16, 2, 0, 8, Default::default(), 2);
        let m = EgoMotion::from_ego_step(fwd, 0.0, yaw);
        let q = |p: [f64; 3]| far_core::temporal::reposition(
            &far_core::query::make_global_queries(1, 0, &params, &Default::default())[0],
            Point3::from(Vector3::from(p)),
            &params,
        );
        let (qa, qb) = (ego_compensate(&q(a), &m, &params), ego_compensate(&q(b), &m, &params));
        let before = (Vector3::from(a) - Vector3::from(b)).norm();
        prop_assert!(((qa.ref_point - qb.ref_point).norm() - before).abs() < 1e-9);
    }
}
